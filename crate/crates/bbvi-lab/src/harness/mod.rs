//! Experiment orchestration: configuration files, target generation,
//! stepsize sweeps, CSV emission, and the command-line interface.

mod cli;
mod config;
mod csv;
mod sweep;

pub use cli::{cli, USAGE};
pub use config::{ExperimentConfig, ScheduleSpec, TargetSpec, VariantSpec};
pub use csv::{fmt_float, sweep_csv, trajectory_csv, SWEEP_HEADER, TRAJECTORY_HEADER};
pub use sweep::{run_single, run_sweep, SweepRow, TrajectoryRow};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::{self, Stream};
use crate::targets::QuadraticTarget;

/// Draws a quadratic target whose precision matrix has the prescribed
/// extreme eigenvalues: largest `smoothness`, smallest `smoothness / kappa`,
/// interior eigenvalues log-uniform in between, eigenvectors from a random
/// orthogonal matrix. The target mean is a standard normal draw so the
/// location coordinates are exercised too.
pub fn make_conditioned_gaussian(
    dim: usize,
    kappa: f64,
    smoothness: f64,
    rng: &mut Stream,
) -> Result<QuadraticTarget> {
    if kappa < 1.0 || smoothness <= 0.0 {
        return Err(Error::ContractViolation(format!(
            "require kappa >= 1 and positive smoothness, got {kappa}, {smoothness}"
        )));
    }
    if dim < 2 && kappa > 1.0 {
        return Err(Error::ContractViolation(
            "a one-dimensional matrix cannot have a condition number above one".into(),
        ));
    }
    let mut mean = vec![0.0; dim];
    rng::fill_standard_normal(rng, &mut mean);
    if kappa == 1.0 {
        let mut a = Matrix::zeros(dim, dim);
        for i in 0..dim {
            a.set(i, i, smoothness);
        }
        return QuadraticTarget::new(a, mean, 0.0);
    }
    let lambda_min = smoothness / kappa;
    let mut eigs = Vec::with_capacity(dim);
    eigs.push(lambda_min);
    for _ in 0..dim.saturating_sub(2) {
        let t: f64 = rand::Rng::random(rng);
        eigs.push((lambda_min.ln() + t * (smoothness.ln() - lambda_min.ln())).exp());
    }
    eigs.push(smoothness);
    let q = linalg::random_orthogonal(dim, rng);
    let a = linalg::sym_from_spectrum(&q, &eigs);
    QuadraticTarget::new(a, mean, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conditioned_gaussian_examples() {
        // equal eigenvalues collapse to an exact multiple of the identity
        let mut r = rng::stream(1);
        let t = make_conditioned_gaussian(2, 1.0, 5.0, &mut r).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 5.0 } else { 0.0 };
                assert_eq!(t.matrix().get(i, j), want);
            }
        }

        let mut r = rng::stream(2);
        let t = make_conditioned_gaussian(10, 10.0, 100.0, &mut r).unwrap();
        let measured_kappa = t.smoothness() / t.strong_convexity();
        assert!(
            (measured_kappa - 10.0).abs() <= 1e-8 * 10.0,
            "kappa = {measured_kappa}"
        );
        assert!((t.smoothness() - 100.0).abs() <= 1e-8 * 100.0);

        // determinism under an equal seed
        let mut r1 = rng::stream(33);
        let mut r2 = rng::stream(33);
        let a = make_conditioned_gaussian(4, 3.0, 8.0, &mut r1).unwrap();
        let b = make_conditioned_gaussian(4, 3.0, 8.0, &mut r2).unwrap();
        assert_eq!(a.matrix().data(), b.matrix().data());
        assert_eq!(a.mean(), b.mean());

        assert!(make_conditioned_gaussian(1, 10.0, 1.0, &mut r).is_err());
        assert!(make_conditioned_gaussian(3, 0.5, 1.0, &mut r).is_err());
    }
}
