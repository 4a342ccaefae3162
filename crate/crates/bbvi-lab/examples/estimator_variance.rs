//! Compares the two total-gradient estimators at and away from the family
//! optimum. The closed-form-entropy estimator keeps a strictly positive
//! per-sample variance at the optimum; the sticking-the-landing estimator
//! is exactly zero there, sample by sample, because the frozen score
//! cancels the energy gradient when the variational distribution matches
//! the posterior.
//!
//! ```text
//! cargo run --release --example estimator_variance
//! ```

use bbvi_lab::estimators::{self, EstimatorKind};
use bbvi_lab::family::{Conditioner, FamilyConfig, VariationalParams};
use bbvi_lab::harness;
use bbvi_lab::linalg;
use bbvi_lab::rng;
use bbvi_lab::targets::Target;

fn main() {
    let dim = 5;
    let mut target_rng = rng::stream(11);
    let quadratic = harness::make_conditioned_gaussian(dim, 10.0, 10.0, &mut target_rng).unwrap();
    let family = FamilyConfig::cholesky(dim, Conditioner::Identity);
    let star = quadratic.optimal_params(&family).unwrap();
    let target = Target::Quadratic(quadratic);

    // a point away from the optimum: the optimum with the location shifted
    let mut shifted = star.clone();
    for m in shifted.m.iter_mut() {
        *m += 1.0;
    }

    let m_samples = 100_000;
    println!("{:<26}  {:>18}  {:>14}", "estimator @ point", "trace variance", "|mean|");
    for (label, params) in [("optimum", &star), ("shifted location", &shifted)] {
        for kind in [EstimatorKind::ClosedFormEntropy, EstimatorKind::StickingTheLanding] {
            let mut stream = rng::stream(99);
            let est =
                estimators::total_grad(kind, params, &family, &target, m_samples, &mut stream)
                    .unwrap();
            println!(
                "{:<26}  {:>18.6e}  {:>14.6e}",
                format!("{} @ {label}", kind.name()),
                est.per_sample_trace_variance,
                linalg::norm(&est.mean)
            );
        }
    }

    // every single STL sample vanishes at the optimum
    let mut r = rng::stream(5);
    let mut worst = 0.0_f64;
    let mut u = vec![0.0; dim];
    for _ in 0..1000 {
        rng::fill_standard_normal(&mut r, &mut u);
        let g = estimators::stl_grad_at(&star, &family, &target, &u).unwrap();
        worst = worst.max(linalg::norm(&g));
    }
    println!("\nlargest per-sample STL gradient norm at the optimum: {worst:.3e}");

    // the assumption statistics behind convexity and smoothness
    let a = linalg::Matrix::from_rows(&[&[1.0, -2.0], &[-2.0, 5.0]]).unwrap();
    let counter = Target::Quadratic(
        bbvi_lab::targets::QuadraticTarget::new(a, vec![0.0; 2], 0.0).unwrap(),
    );
    let config2 = FamilyConfig::cholesky(2, Conditioner::Identity);
    let params = VariationalParams::new(&config2, vec![0.0; 2], vec![1.0, 1.0], vec![1.0]).unwrap();
    let mut stream = rng::stream(1);
    let stat =
        estimators::assumption_convexity_stat(&params, &config2, &counter, 1_000_000, &mut stream)
            .unwrap();
    println!(
        "\nconvexity statistic on the counter-example scale: ({:.4}, {:.4})",
        stat.mean[0], stat.mean[1]
    );
    println!("a negative first coordinate certifies that convexity of the target");
    println!("does not transfer to the energy for full-rank nonlinear conditioners");
}
