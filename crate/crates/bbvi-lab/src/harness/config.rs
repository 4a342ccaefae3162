//! Experiment configuration and its flat key-value file format.
//!
//! The format is one `section.key = value` assignment per line, `#` for
//! comments. Every floating-point value is serialized with 17 significant
//! digits, so a config survives a write/parse round trip without any loss.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::family::{Conditioner, FamilyKind};
use crate::harness::csv::fmt_float;
use crate::linalg::Matrix;
use crate::optimizers::OptimizerKind;
use crate::rng::{self, Stream};
use crate::targets::{LogisticTarget, QuadraticTarget, Target};

/// What to infer. Quadratic targets may be specified by an explicit matrix
/// or generated with prescribed conditioning; logistic targets draw a
/// synthetic design from their own data seed.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    Generated {
        dim: usize,
        kappa: f64,
        smoothness: f64,
    },
    Quadratic {
        dim: usize,
        matrix: Vec<f64>,
        mean: Vec<f64>,
        offset: f64,
    },
    Logistic {
        dim: usize,
        rows: usize,
        alpha: f64,
        data_seed: u64,
    },
}

impl TargetSpec {
    pub fn dim(&self) -> usize {
        match self {
            TargetSpec::Generated { dim, .. }
            | TargetSpec::Quadratic { dim, .. }
            | TargetSpec::Logistic { dim, .. } => *dim,
        }
    }

    /// Builds the target. Generated targets consume the provided stream;
    /// explicit and logistic targets are independent of it.
    pub fn build(&self, rng: &mut Stream) -> Result<Target> {
        match self {
            TargetSpec::Generated {
                dim,
                kappa,
                smoothness,
            } => Ok(Target::Quadratic(super::make_conditioned_gaussian(
                *dim,
                *kappa,
                *smoothness,
                rng,
            )?)),
            TargetSpec::Quadratic {
                dim,
                matrix,
                mean,
                offset,
            } => {
                let a = Matrix::from_row_major(*dim, matrix)?;
                Ok(Target::Quadratic(QuadraticTarget::new(
                    a,
                    mean.clone(),
                    *offset,
                )?))
            }
            TargetSpec::Logistic {
                dim,
                rows,
                alpha,
                data_seed,
            } => {
                let mut data_rng = rng::stream(*data_seed);
                let mut x = Matrix::zeros(*rows, *dim);
                let scale = 1.0 / (*dim as f64).sqrt();
                let mut w = vec![0.0; *dim];
                rng::fill_standard_normal(&mut data_rng, &mut w);
                let mut y = Vec::with_capacity(*rows);
                for i in 0..*rows {
                    let mut t = 0.0;
                    for j in 0..*dim {
                        let v = scale * rng::standard_normal(&mut data_rng);
                        x.set(i, j, v);
                        t += v * w[j];
                    }
                    let p = crate::family::sigmoid(t);
                    let coin: f64 = rand::Rng::random(&mut data_rng);
                    y.push(if coin < p { 1.0 } else { -1.0 });
                }
                Ok(Target::Logistic(LogisticTarget::new(x, y, *alpha)?))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleSpec {
    Fixed { gamma: f64 },
    InvSqrt { gamma: f64 },
    TwoStage,
}

impl ScheduleSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ScheduleSpec::Fixed { .. } => "fixed",
            ScheduleSpec::InvSqrt { .. } => "inv_sqrt",
            ScheduleSpec::TwoStage => "two_stage",
        }
    }
}

/// An (optimizer, conditioner) pair swept as one curve of the stepsize
/// grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariantSpec {
    pub optimizer: OptimizerKind,
    pub conditioner: Conditioner,
}

impl VariantSpec {
    pub fn encode(&self) -> String {
        format!("{}:{}", self.optimizer.name(), self.conditioner.name())
    }

    pub fn parse(s: &str) -> Result<Self> {
        let (opt, cond) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("variant '{s}' must look like optimizer:conditioner")))?;
        Ok(VariantSpec {
            optimizer: OptimizerKind::parse(opt)?,
            conditioner: Conditioner::parse(cond)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub target: TargetSpec,
    pub family_kind: FamilyKind,
    pub conditioner: Conditioner,
    pub optimizer: OptimizerKind,
    pub estimator: EstimatorKind,
    pub schedule: ScheduleSpec,
    pub samples_per_step: usize,
    pub max_iters: u64,
    pub eps_kl: f64,
    pub replications: usize,
    pub base_seed: u64,
    pub checkpoint_every: u64,
    pub init_scale: f64,
    pub output_path: String,
    pub sweep_stepsizes: Vec<f64>,
    pub sweep_init_scales: Vec<f64>,
    pub sweep_variants: Vec<VariantSpec>,
}

/// The default stepsize grid: 13 log-spaced values from 1e-6 to 1.
pub fn default_stepsize_grid() -> Vec<f64> {
    (0..13).map(|k| 10f64.powf(-6.0 + 0.5 * k as f64)).collect()
}

impl Default for ExperimentConfig {
    /// The synthetic-Gaussian benchmark: a generated 10-dimensional target
    /// with condition number 10 and smoothness 100, full-rank family,
    /// 10 replications, 10 Monte-Carlo samples per step, threshold KL = 1,
    /// and initial scales {1, 1e-3, 1e-5} over the default grid.
    fn default() -> Self {
        ExperimentConfig {
            target: TargetSpec::Generated {
                dim: 10,
                kappa: 10.0,
                smoothness: 100.0,
            },
            family_kind: FamilyKind::Cholesky,
            conditioner: Conditioner::Identity,
            optimizer: OptimizerKind::ProxSgd,
            estimator: EstimatorKind::ClosedFormEntropy,
            schedule: ScheduleSpec::Fixed { gamma: 1e-3 },
            samples_per_step: 10,
            max_iters: 50_000,
            eps_kl: 1.0,
            replications: 10,
            base_seed: 0,
            checkpoint_every: 100,
            init_scale: 1.0,
            output_path: "out.csv".into(),
            sweep_stepsizes: default_stepsize_grid(),
            sweep_init_scales: vec![1.0, 1e-3, 1e-5],
            sweep_variants: vec![
                VariantSpec {
                    optimizer: OptimizerKind::ProxSgd,
                    conditioner: Conditioner::Identity,
                },
                VariantSpec {
                    optimizer: OptimizerKind::VanillaSgd,
                    conditioner: Conditioner::Identity,
                },
                VariantSpec {
                    optimizer: OptimizerKind::VanillaSgd,
                    conditioner: Conditioner::Softplus,
                },
            ],
        }
    }
}

fn fmt_floats(values: &[f64]) -> String {
    values.iter().map(|v| fmt_float(*v)).collect::<Vec<_>>().join(" ")
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number '{tok}'")))
        })
        .collect()
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_step == 0 || self.replications == 0 || self.checkpoint_every == 0 {
            return Err(Error::Config("counts must be >= 1".into()));
        }
        if !(self.eps_kl > 0.0) {
            return Err(Error::Config("eps_kl must be positive".into()));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::Config("init scale must be positive".into()));
        }
        if self.sweep_stepsizes.is_empty()
            || self.sweep_init_scales.is_empty()
            || self.sweep_variants.is_empty()
        {
            return Err(Error::Config("sweep grids must be non-empty".into()));
        }
        match &self.target {
            TargetSpec::Quadratic { dim, matrix, mean, .. } => {
                if matrix.len() != dim * dim || mean.len() != *dim {
                    return Err(Error::Config("target matrix/mean sizes mismatch".into()));
                }
            }
            TargetSpec::Generated { dim, kappa, .. } => {
                if *dim == 0 || *kappa < 1.0 {
                    return Err(Error::Config("bad generator parameters".into()));
                }
            }
            TargetSpec::Logistic { dim, rows, alpha, .. } => {
                if *dim == 0 || *rows == 0 || !(*alpha > 0.0) {
                    return Err(Error::Config("bad logistic parameters".into()));
                }
            }
        }
        Ok(())
    }

    /// Serializes to the flat key-value format. Parsing the result yields
    /// an identical configuration.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        match &self.target {
            TargetSpec::Generated {
                dim,
                kappa,
                smoothness,
            } => {
                out.push_str("target.kind = generated\n");
                let _ = writeln!(out, "target.dim = {dim}");
                let _ = writeln!(out, "target.kappa = {}", fmt_float(*kappa));
                let _ = writeln!(out, "target.smoothness = {}", fmt_float(*smoothness));
            }
            TargetSpec::Quadratic {
                dim,
                matrix,
                mean,
                offset,
            } => {
                out.push_str("target.kind = quadratic\n");
                let _ = writeln!(out, "target.dim = {dim}");
                let _ = writeln!(out, "target.matrix = {}", fmt_floats(matrix));
                let _ = writeln!(out, "target.mean = {}", fmt_floats(mean));
                let _ = writeln!(out, "target.offset = {}", fmt_float(*offset));
            }
            TargetSpec::Logistic {
                dim,
                rows,
                alpha,
                data_seed,
            } => {
                out.push_str("target.kind = logistic\n");
                let _ = writeln!(out, "target.dim = {dim}");
                let _ = writeln!(out, "target.rows = {rows}");
                let _ = writeln!(out, "target.alpha = {}", fmt_float(*alpha));
                let _ = writeln!(out, "target.data_seed = {data_seed}");
            }
        }
        let _ = writeln!(out, "family.kind = {}", self.family_kind.name());
        let _ = writeln!(out, "family.conditioner = {}", self.conditioner.name());
        let _ = writeln!(out, "optimizer.kind = {}", self.optimizer.name());
        let _ = writeln!(out, "estimator.kind = {}", self.estimator.name());
        let _ = writeln!(out, "schedule.kind = {}", self.schedule.kind_name());
        match self.schedule {
            ScheduleSpec::Fixed { gamma } | ScheduleSpec::InvSqrt { gamma } => {
                let _ = writeln!(out, "schedule.gamma = {}", fmt_float(gamma));
            }
            ScheduleSpec::TwoStage => {}
        }
        let _ = writeln!(out, "run.samples_per_step = {}", self.samples_per_step);
        let _ = writeln!(out, "run.max_iters = {}", self.max_iters);
        let _ = writeln!(out, "run.eps_kl = {}", fmt_float(self.eps_kl));
        let _ = writeln!(out, "run.replications = {}", self.replications);
        let _ = writeln!(out, "run.base_seed = {}", self.base_seed);
        let _ = writeln!(out, "run.checkpoint_every = {}", self.checkpoint_every);
        let _ = writeln!(out, "run.init_scale = {}", fmt_float(self.init_scale));
        let _ = writeln!(out, "output.path = {}", self.output_path);
        let _ = writeln!(out, "sweep.stepsizes = {}", fmt_floats(&self.sweep_stepsizes));
        let _ = writeln!(out, "sweep.init_scales = {}", fmt_floats(&self.sweep_init_scales));
        let variants: Vec<String> = self.sweep_variants.iter().map(|v| v.encode()).collect();
        let _ = writeln!(out, "sweep.variants = {}", variants.join(" "));
        out
    }

    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        let get = |key: &str| -> Result<&String> {
            map.get(key)
                .ok_or_else(|| Error::Config(format!("missing key '{key}'")))
        };
        let parse_usize = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| Error::Config(format!("bad integer for '{key}'")))
        };
        let parse_u64 = |key: &str| -> Result<u64> {
            get(key)?
                .parse()
                .map_err(|_| Error::Config(format!("bad integer for '{key}'")))
        };
        let parse_f64 = |key: &str| -> Result<f64> {
            get(key)?
                .parse()
                .map_err(|_| Error::Config(format!("bad number for '{key}'")))
        };

        let target = match get("target.kind")?.as_str() {
            "generated" => TargetSpec::Generated {
                dim: parse_usize("target.dim")?,
                kappa: parse_f64("target.kappa")?,
                smoothness: parse_f64("target.smoothness")?,
            },
            "quadratic" => TargetSpec::Quadratic {
                dim: parse_usize("target.dim")?,
                matrix: parse_floats(get("target.matrix")?)?,
                mean: parse_floats(get("target.mean")?)?,
                offset: parse_f64("target.offset")?,
            },
            "logistic" => TargetSpec::Logistic {
                dim: parse_usize("target.dim")?,
                rows: parse_usize("target.rows")?,
                alpha: parse_f64("target.alpha")?,
                data_seed: parse_u64("target.data_seed")?,
            },
            other => return Err(Error::Config(format!("unknown target kind '{other}'"))),
        };
        let schedule = match get("schedule.kind")?.as_str() {
            "fixed" => ScheduleSpec::Fixed {
                gamma: parse_f64("schedule.gamma")?,
            },
            "inv_sqrt" => ScheduleSpec::InvSqrt {
                gamma: parse_f64("schedule.gamma")?,
            },
            "two_stage" => ScheduleSpec::TwoStage,
            other => return Err(Error::Config(format!("unknown schedule kind '{other}'"))),
        };
        let variants = get("sweep.variants")?
            .split_whitespace()
            .map(VariantSpec::parse)
            .collect::<Result<Vec<_>>>()?;

        let config = ExperimentConfig {
            target,
            family_kind: FamilyKind::parse(get("family.kind")?)?,
            conditioner: Conditioner::parse(get("family.conditioner")?)?,
            optimizer: OptimizerKind::parse(get("optimizer.kind")?)?,
            estimator: EstimatorKind::parse(get("estimator.kind")?)?,
            schedule,
            samples_per_step: parse_usize("run.samples_per_step")?,
            max_iters: parse_u64("run.max_iters")?,
            eps_kl: parse_f64("run.eps_kl")?,
            replications: parse_usize("run.replications")?,
            base_seed: parse_u64("run.base_seed")?,
            checkpoint_every: parse_u64("run.checkpoint_every")?,
            init_scale: parse_f64("run.init_scale")?,
            output_path: get("output.path")?.clone(),
            sweep_stepsizes: parse_floats(get("sweep.stepsizes")?)?,
            sweep_init_scales: parse_floats(get("sweep.init_scales")?)?,
            sweep_variants: variants,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read '{path}': {e}")))?;
        Self::from_config_str(&text)
    }
}
