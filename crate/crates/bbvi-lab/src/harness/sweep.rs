//! Sweep and single-run execution on top of the optimizer loop.
//!
//! Seeds are derived from the base seed and stable cell indices only, so a
//! sweep produces identical rows no matter how many threads execute it.
//! Rows are generated in canonical nested order (variant, stepsize,
//! initial scale, replication).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::family::{Conditioner, FamilyConfig, VariationalParams};
use crate::harness::config::{ExperimentConfig, ScheduleSpec, VariantSpec};
use crate::optimizers::{self, OptimizerKind, RunSettings, StepSchedule};
use crate::rng;
use crate::targets::Target;

const TAG_TARGET: u64 = 0x7a67;
const TAG_RUN: u64 = 0x52;
const TAG_SINGLE: u64 = 0x1;

/// One checkpoint of one trajectory, with the run metadata flattened in.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub trial: usize,
    pub optimizer: &'static str,
    pub conditioner: &'static str,
    pub estimator: &'static str,
    pub stepsize: f64,
    pub init_scale: f64,
    pub iteration: u64,
    pub kl: Option<f64>,
    pub param_dist_sq: Option<f64>,
    pub elbo: f64,
    pub clamps: u64,
}

/// One sweep cell: did this (optimizer, conditioner, stepsize, init,
/// replication) combination reach the KL threshold, and how fast.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub trial: usize,
    pub optimizer: &'static str,
    pub conditioner: &'static str,
    pub stepsize: f64,
    pub init_scale: f64,
    pub iters_to_eps: Option<u64>,
    pub censored: bool,
    /// Missing when the cell aborted on a numeric failure.
    pub final_kl: Option<f64>,
}

fn schedule_for(spec: &ScheduleSpec, gamma: f64, target: &Target, family: &FamilyConfig, m: usize) -> StepSchedule {
    match spec {
        ScheduleSpec::Fixed { .. } => StepSchedule::Fixed(gamma),
        ScheduleSpec::InvSqrt { .. } => StepSchedule::InvSqrt(gamma),
        ScheduleSpec::TwoStage => StepSchedule::two_stage_for(
            target.smoothness(),
            target.strong_convexity(),
            family.variance_constant(),
            m,
        ),
    }
}

/// Runs the configured experiment once per replication and returns every
/// checkpoint. Single runs cover the full iteration budget; the KL
/// threshold only applies to sweeps.
pub fn run_single(config: &ExperimentConfig) -> Result<Vec<TrajectoryRow>> {
    config.validate()?;
    let dim = config.target.dim();
    let family = FamilyConfig {
        kind: config.family_kind,
        conditioner: config.conditioner,
        base: crate::family::BaseDistribution::StandardNormal,
        dim,
    };
    let gamma = match config.schedule {
        ScheduleSpec::Fixed { gamma } | ScheduleSpec::InvSqrt { gamma } => gamma,
        ScheduleSpec::TwoStage => 0.0,
    };
    let mut rows = Vec::new();
    for rep in 0..config.replications {
        let mut target_rng = rng::substream(config.base_seed, &[TAG_TARGET, rep as u64]);
        let target = config.target.build(&mut target_rng)?;
        let schedule = schedule_for(&config.schedule, gamma, &target, &family, config.samples_per_step);
        let init = VariationalParams::isotropic(&family, config.init_scale)?;
        let settings = RunSettings {
            optimizer: config.optimizer,
            estimator: config.estimator,
            schedule,
            m_samples: config.samples_per_step,
            max_iters: config.max_iters,
            checkpoint_every: config.checkpoint_every,
            eps_kl: None,
            adam: None,
        };
        let mut run_rng = rng::substream(config.base_seed, &[TAG_SINGLE, rep as u64]);
        let outcome = optimizers::run(&target, &family, &init, &settings, &mut run_rng)?;
        for rec in outcome.records {
            rows.push(TrajectoryRow {
                trial: rep,
                optimizer: config.optimizer.name(),
                conditioner: config.conditioner.name(),
                estimator: config.estimator.name(),
                stepsize: schedule.base_value(),
                init_scale: config.init_scale,
                iteration: rec.iteration,
                kl: rec.kl,
                param_dist_sq: rec.param_dist_sq,
                elbo: rec.elbo,
                clamps: rec.domain_clamps,
            });
        }
    }
    Ok(rows)
}

struct Cell {
    variant: VariantSpec,
    stepsize: f64,
    init_scale: f64,
    rep: usize,
    seed_tags: [u64; 5],
}

/// Runs the full (variant x stepsize x initial-scale x replication) grid.
/// Every replication draws a fresh target from its own seed; a cell that
/// aborts on a numeric failure is recorded censored with its KL missing
/// rather than failing the sweep.
pub fn run_sweep(
    config: &ExperimentConfig,
    stepsizes: &[f64],
    init_scales: &[f64],
) -> Result<Vec<SweepRow>> {
    config.validate()?;
    if stepsizes.is_empty() || init_scales.is_empty() {
        return Err(Error::Config("sweep grids must be non-empty".into()));
    }
    for v in &config.sweep_variants {
        if matches!(v.optimizer, OptimizerKind::ProxSgd | OptimizerKind::ProxGenAdam)
            && v.conditioner != Conditioner::Identity
        {
            return Err(Error::Config(format!(
                "variant {} pairs a proximal optimizer with a nonlinear conditioner",
                v.encode()
            )));
        }
    }
    let dim = config.target.dim();

    let mut cells = Vec::new();
    for (vi, variant) in config.sweep_variants.iter().enumerate() {
        for (si, &stepsize) in stepsizes.iter().enumerate() {
            for (ii, &init_scale) in init_scales.iter().enumerate() {
                for rep in 0..config.replications {
                    cells.push(Cell {
                        variant: *variant,
                        stepsize,
                        init_scale,
                        rep,
                        seed_tags: [TAG_RUN, vi as u64, si as u64, ii as u64, rep as u64],
                    });
                }
            }
        }
    }

    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|cell| -> Result<SweepRow> {
            let mut target_rng =
                rng::substream(config.base_seed, &[TAG_TARGET, cell.rep as u64]);
            let target = config.target.build(&mut target_rng)?;
            let family = FamilyConfig {
                kind: config.family_kind,
                conditioner: cell.variant.conditioner,
                base: crate::family::BaseDistribution::StandardNormal,
                dim,
            };
            let init = VariationalParams::isotropic(&family, cell.init_scale)?;
            let settings = RunSettings {
                optimizer: cell.variant.optimizer,
                estimator: config.estimator,
                schedule: StepSchedule::Fixed(cell.stepsize),
                m_samples: config.samples_per_step,
                max_iters: config.max_iters,
                checkpoint_every: config.max_iters.max(1),
                eps_kl: Some(config.eps_kl),
                adam: None,
            };
            let mut run_rng = rng::substream(config.base_seed, &cell.seed_tags);
            match optimizers::run(&target, &family, &init, &settings, &mut run_rng) {
                Ok(out) => Ok(SweepRow {
                    trial: cell.rep,
                    optimizer: cell.variant.optimizer.name(),
                    conditioner: cell.variant.conditioner.name(),
                    stepsize: cell.stepsize,
                    init_scale: cell.init_scale,
                    iters_to_eps: out.iterations_to_eps,
                    censored: out.censored,
                    final_kl: out.final_kl,
                }),
                Err(Error::NumericFailure(_)) | Err(Error::DomainViolation(_)) => Ok(SweepRow {
                    trial: cell.rep,
                    optimizer: cell.variant.optimizer.name(),
                    conditioner: cell.variant.conditioner.name(),
                    stepsize: cell.stepsize,
                    init_scale: cell.init_scale,
                    iters_to_eps: None,
                    censored: true,
                    final_kl: None,
                }),
                Err(other) => Err(other),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows)
}
