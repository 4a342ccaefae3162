//! One proximal-SGD run on a conditioned synthetic Gaussian, with the
//! closed-form KL to the exact posterior tracked along the way. Writes the
//! trajectory to `trajectory.csv` in the working directory.
//!
//! ```text
//! cargo run --release --example single_trajectory
//! ```

use bbvi_lab::estimators::EstimatorKind;
use bbvi_lab::family::{Conditioner, FamilyConfig, VariationalParams};
use bbvi_lab::harness::{self, trajectory_csv, TrajectoryRow};
use bbvi_lab::optimizers::{self, OptimizerKind, RunSettings, StepSchedule};
use bbvi_lab::rng;
use bbvi_lab::targets::Target;

fn main() {
    let dim = 10;
    let mut target_rng = rng::stream(2024);
    let quadratic = harness::make_conditioned_gaussian(dim, 10.0, 100.0, &mut target_rng)
        .expect("valid generator parameters");
    let target = Target::Quadratic(quadratic);
    let family = FamilyConfig::cholesky(dim, Conditioner::Identity);

    // the fixed stepsize the strongly-convex rate guarantees, M / (2 L kappa C)
    let m_samples = 10;
    let kappa = target.smoothness() / target.strong_convexity();
    let gamma = m_samples as f64
        / (2.0 * target.smoothness() * kappa * family.variance_constant());
    println!(
        "d = {dim}, kappa = {kappa:.2}, L = {:.1}, stepsize = {gamma:.3e}",
        target.smoothness()
    );

    let init = VariationalParams::isotropic(&family, 1.0).unwrap();
    let settings = RunSettings {
        optimizer: OptimizerKind::ProxSgd,
        estimator: EstimatorKind::ClosedFormEntropy,
        schedule: StepSchedule::Fixed(gamma),
        m_samples,
        max_iters: 20_000,
        checkpoint_every: 1000,
        eps_kl: None,
        adam: None,
    };
    let out = optimizers::run(&target, &family, &init, &settings, &mut rng::stream(7))
        .expect("run cannot hit a configuration conflict");

    println!("{:>10}  {:>14}  {:>14}  {:>14}", "iteration", "kl", "dist_sq", "objective");
    let mut rows = Vec::new();
    for rec in &out.records {
        println!(
            "{:>10}  {:>14.6e}  {:>14.6e}  {:>14.6e}",
            rec.iteration,
            rec.kl.unwrap_or(f64::NAN),
            rec.param_dist_sq.unwrap_or(f64::NAN),
            rec.elbo
        );
        rows.push(TrajectoryRow {
            trial: 0,
            optimizer: settings.optimizer.name(),
            conditioner: family.conditioner.name(),
            estimator: settings.estimator.name(),
            stepsize: gamma,
            init_scale: 1.0,
            iteration: rec.iteration,
            kl: rec.kl,
            param_dist_sq: rec.param_dist_sq,
            elbo: rec.elbo,
            clamps: rec.domain_clamps,
        });
    }
    std::fs::write("trajectory.csv", trajectory_csv(&rows)).expect("writable working directory");
    println!("\nwrote trajectory.csv ({} checkpoints)", rows.len());
}
