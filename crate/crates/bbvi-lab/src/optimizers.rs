//! Update rules and the experiment loop.
//!
//! Three optimizers are provided:
//!
//! - vanilla SGD on the total gradient, with a domain clamp on the scale
//!   pre-parameters under the identity conditioner;
//! - proximal SGD, which steps on the energy gradient only and resolves the
//!   entropy through a closed-form proximal map on each scale coordinate;
//! - a proximal Adam-style rule with per-coordinate adaptive stepsizes,
//!   heavy-ball momentum, no bias correction, and the same scale proximal
//!   map applied with each coordinate's own stepsize.

use crate::error::{Error, Result};
use crate::estimators::{self, EstimatorKind};
use crate::family::{self, Conditioner, FamilyConfig, VariationalParams};
use crate::rng::Stream;
use crate::targets::Target;

/// Scale clamp for vanilla SGD under the identity conditioner. Clamps are
/// counted and reported, never hidden.
pub const DOMAIN_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    VanillaSgd,
    ProxSgd,
    ProxGenAdam,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::VanillaSgd => "sgd",
            OptimizerKind::ProxSgd => "prox_sgd",
            OptimizerKind::ProxGenAdam => "proxgen_adam",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::VanillaSgd),
            "prox_sgd" => Ok(OptimizerKind::ProxSgd),
            "proxgen_adam" => Ok(OptimizerKind::ProxGenAdam),
            other => Err(Error::Config(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// Stepsize schedules. The two-stage schedule holds a flat stepsize until
/// `t_switch` and then decays as (2t + 1) / ((t + 1)^2 mu).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Fixed(f64),
    InvSqrt(f64),
    TwoStage {
        gamma_flat: f64,
        mu: f64,
        t_switch: u64,
    },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Fixed(g) => g > 0.0,
            StepSchedule::InvSqrt(g0) => g0 > 0.0,
            StepSchedule::TwoStage { gamma_flat, mu, .. } => gamma_flat > 0.0 && mu > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ContractViolation("stepsizes must be positive".into()))
        }
    }

    pub fn gamma(&self, t: u64) -> f64 {
        match *self {
            StepSchedule::Fixed(g) => g,
            StepSchedule::InvSqrt(g0) => g0 / ((t + 1) as f64).sqrt(),
            StepSchedule::TwoStage {
                gamma_flat,
                mu,
                t_switch,
            } => {
                if t <= t_switch {
                    gamma_flat
                } else {
                    let tf = t as f64;
                    (2.0 * tf + 1.0) / ((tf + 1.0) * (tf + 1.0) * mu)
                }
            }
        }
    }

    /// Builds the two-stage schedule from the problem constants: flat value
    /// M / (2 L kappa C(d, phi)) until 4 * ceil(kappa^2 C(d, phi) / M).
    pub fn two_stage_for(
        smoothness: f64,
        strong_convexity: f64,
        variance_constant: f64,
        m_samples: usize,
    ) -> Self {
        let kappa = smoothness / strong_convexity;
        let m = m_samples as f64;
        let gamma_flat = m / (2.0 * smoothness * kappa * variance_constant);
        let t_kappa = (kappa * kappa * variance_constant / m).ceil() as u64;
        StepSchedule::TwoStage {
            gamma_flat,
            mu: strong_convexity,
            t_switch: 4 * t_kappa,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StepSchedule::Fixed(_) => "fixed",
            StepSchedule::InvSqrt(_) => "inv_sqrt",
            StepSchedule::TwoStage { .. } => "two_stage",
        }
    }

    /// The nominal stepsize recorded in output tables.
    pub fn base_value(&self) -> f64 {
        match *self {
            StepSchedule::Fixed(g) => g,
            StepSchedule::InvSqrt(g0) => g0,
            StepSchedule::TwoStage { gamma_flat, .. } => gamma_flat,
        }
    }
}

/// Closed-form proximal map of the scale entropy on one coordinate:
/// the positive root of x^2 - s x - gamma = 0,
/// x = s + (sqrt(s^2 + 4 gamma) - s) / 2.
///
/// Evaluated through the conjugate expression for s < 0 so no cancellation
/// occurs anywhere on the real line.
pub fn prox_entropy_scale(s: f64, gamma: f64) -> Result<f64> {
    if gamma < 0.0 {
        return Err(Error::ContractViolation(format!(
            "prox stepsize must be nonnegative, got {gamma}"
        )));
    }
    if gamma == 0.0 {
        if s > 0.0 {
            return Ok(s); // identity limit
        }
        return Err(Error::ContractViolation(
            "prox with zero stepsize requires a positive scale".into(),
        ));
    }
    let disc = (s * s + 4.0 * gamma).sqrt();
    let x = if s >= 0.0 {
        0.5 * (s + disc)
    } else {
        2.0 * gamma / (disc - s)
    };
    // the exact root is positive but can underflow once |s| is astronomical
    // (a diverged iterate); flooring keeps the domain valid so the run can
    // report the divergence instead of poisoning the parameters
    Ok(x.max(f64::MIN_POSITIVE))
}

fn ensure_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericFailure(format!("non-finite {what}")))
    }
}

/// One vanilla SGD step on the flattened parameters. Under the identity
/// conditioner any scale pre-parameter at or below the domain floor is
/// clamped to `DOMAIN_CLAMP`; the returned count exposes how often that
/// happened.
pub fn sgd_step(
    lambda: &[f64],
    grad_total: &[f64],
    gamma: f64,
    config: &FamilyConfig,
) -> Result<(Vec<f64>, u64)> {
    ensure_finite(grad_total, "gradient")?;
    let mut next: Vec<f64> = lambda
        .iter()
        .zip(grad_total)
        .map(|(x, g)| x - gamma * g)
        .collect();
    let mut clamps = 0;
    if config.conditioner == Conditioner::Identity {
        let d = config.dim;
        for si in next[d..2 * d].iter_mut() {
            if *si <= DOMAIN_CLAMP {
                *si = DOMAIN_CLAMP;
                clamps += 1;
            }
        }
    }
    Ok((next, clamps))
}

/// One proximal SGD step: plain gradient steps on the location and
/// off-diagonal coordinates, a gradient step followed by the entropy prox on
/// each scale coordinate. Requires the identity conditioner; the resulting
/// scales are always strictly positive, so no clamping can occur.
pub fn prox_sgd_step(
    lambda: &[f64],
    grad_energy: &[f64],
    gamma: f64,
    config: &FamilyConfig,
) -> Result<Vec<f64>> {
    if config.conditioner != Conditioner::Identity {
        return Err(Error::UnsupportedConfiguration(
            "the closed-form entropy prox applies to the identity conditioner only".into(),
        ));
    }
    ensure_finite(grad_energy, "gradient")?;
    let mut next: Vec<f64> = lambda
        .iter()
        .zip(grad_energy)
        .map(|(x, g)| x - gamma * g)
        .collect();
    let d = config.dim;
    for si in next[d..2 * d].iter_mut() {
        *si = prox_entropy_scale(*si, gamma)?;
    }
    Ok(next)
}

/// State of the proximal Adam rule: heavy-ball momentum and the
/// exponential moving average of the squared gradient, plus the fixed
/// hyperparameters.
#[derive(Debug, Clone)]
pub struct ProxGenAdamState {
    pub momentum: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl ProxGenAdamState {
    /// Zero state with the conventional defaults beta1 = 0.9,
    /// beta2 = 0.999, eps = 1e-8.
    pub fn new(param_count: usize, alpha: f64) -> Self {
        ProxGenAdamState {
            momentum: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            alpha,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn with_hyperparameters(mut self, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
            return Err(Error::ContractViolation(
                "require 0 <= beta < 1 and eps > 0".into(),
            ));
        }
        self.beta1 = beta1;
        self.beta2 = beta2;
        self.eps = eps;
        Ok(self)
    }
}

/// One proximal Adam step. The momentum and second moment track the energy
/// gradient (the smooth part of the objective); the entropy enters only
/// through the per-coordinate scale prox, exactly as in proximal SGD. No
/// bias correction is applied to either moment. Each scale coordinate is
/// proxed with its own adaptive stepsize alpha / (sqrt(v_i) + eps).
pub fn proxgen_adam_step(
    lambda: &[f64],
    state: &mut ProxGenAdamState,
    grad_energy: &[f64],
    config: &FamilyConfig,
) -> Result<Vec<f64>> {
    if config.conditioner != Conditioner::Identity {
        return Err(Error::UnsupportedConfiguration(
            "the closed-form entropy prox applies to the identity conditioner only".into(),
        ));
    }
    ensure_finite(grad_energy, "gradient")?;
    ensure_finite(&state.momentum, "momentum state")?;
    ensure_finite(&state.second_moment, "second-moment state")?;
    let p = lambda.len();
    let mut next = vec![0.0; p];
    let mut step_sizes = vec![0.0; p];
    for i in 0..p {
        state.momentum[i] = state.beta1 * state.momentum[i] + (1.0 - state.beta1) * grad_energy[i];
        state.second_moment[i] = state.beta2 * state.second_moment[i]
            + (1.0 - state.beta2) * grad_energy[i] * grad_energy[i];
        step_sizes[i] = state.alpha / (state.second_moment[i].sqrt() + state.eps);
        next[i] = lambda[i] - step_sizes[i] * state.momentum[i];
    }
    let d = config.dim;
    for i in 0..d {
        next[d + i] = prox_entropy_scale(next[d + i], step_sizes[d + i])?;
    }
    Ok(next)
}

/// Metrics captured at a checkpoint. `kl` is present for quadratic targets
/// only, `param_dist_sq` whenever the exact optimum is available; absent
/// values are reported as missing, never as zero. `domain_clamps` is the
/// cumulative clamp count up to this iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub iteration: u64,
    pub kl: Option<f64>,
    pub param_dist_sq: Option<f64>,
    pub elbo: f64,
    pub domain_clamps: u64,
}

/// What a single optimizer run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<TrajectoryRecord>,
    /// First iteration at which the KL threshold was met, when one was set.
    pub iterations_to_eps: Option<u64>,
    /// True when a threshold was requested but never reached within the
    /// iteration budget.
    pub censored: bool,
    pub final_kl: Option<f64>,
    pub total_clamps: u64,
}

/// Run configuration for [`run`].
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub optimizer: OptimizerKind,
    pub estimator: EstimatorKind,
    pub schedule: StepSchedule,
    pub m_samples: usize,
    pub max_iters: u64,
    pub checkpoint_every: u64,
    /// Stop early once the closed-form KL drops to this value.
    pub eps_kl: Option<f64>,
    /// Adam hyperparameters used when the optimizer is ProxGenAdam.
    pub adam: Option<(f64, f64, f64)>,
}

struct MetricContext<'a> {
    target: &'a Target,
    config: &'a FamilyConfig,
    lambda_star: Option<Vec<f64>>,
    eval_noise: Vec<Vec<f64>>,
}

impl<'a> MetricContext<'a> {
    const EVAL_SAMPLES: usize = 1000;

    fn new(target: &'a Target, config: &'a FamilyConfig, rng: &mut Stream) -> Self {
        let lambda_star = target.as_quadratic().and_then(|q| {
            q.optimal_params(config).ok().map(|p| p.flatten())
        });
        // non-quadratic targets get a Monte-Carlo objective with noise fixed
        // once per run, so checkpoint values are comparable across iterations
        let eval_noise = if target.as_quadratic().is_none() {
            let mut buf = vec![0.0; config.dim];
            (0..Self::EVAL_SAMPLES)
                .map(|_| {
                    config.base.fill_sample(rng, &mut buf);
                    buf.clone()
                })
                .collect()
        } else {
            Vec::new()
        };
        MetricContext {
            target,
            config,
            lambda_star,
            eval_noise,
        }
    }

    fn kl(&self, params: &VariationalParams) -> Option<f64> {
        self.target
            .as_quadratic()
            .and_then(|q| family::kl_to_gaussian(params, self.config, q).ok())
    }

    fn objective(&self, params: &VariationalParams) -> Result<f64> {
        if let Some(q) = self.target.as_quadratic() {
            return family::elbo_closed_form(params, self.config, q);
        }
        let mut acc = 0.0;
        for u in &self.eval_noise {
            let z = family::reparameterize(params, self.config, u)?;
            acc += self.target.neg_log_joint(&z)?;
        }
        Ok(acc / self.eval_noise.len() as f64 + family::neg_entropy(params, self.config)?)
    }

    fn record(&self, iteration: u64, lambda: &[f64], clamps: u64) -> Result<TrajectoryRecord> {
        let params = VariationalParams::unflatten(self.config, lambda)?;
        let param_dist_sq = self.lambda_star.as_ref().map(|star| {
            lambda
                .iter()
                .zip(star)
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        });
        Ok(TrajectoryRecord {
            iteration,
            kl: self.kl(&params),
            param_dist_sq,
            elbo: self.objective(&params)?,
            domain_clamps: clamps,
        })
    }
}

/// Runs one optimizer trajectory. Deterministic given the stream; metrics
/// are recorded at iteration 0, every `checkpoint_every` iterations, and at
/// the final iteration. Configuration conflicts are rejected before any
/// work; a non-finite iterate or gradient aborts with a numeric failure.
pub fn run(
    target: &Target,
    config: &FamilyConfig,
    init: &VariationalParams,
    settings: &RunSettings,
    rng: &mut Stream,
) -> Result<RunOutcome> {
    settings.schedule.validate()?;
    if settings.m_samples == 0 {
        return Err(Error::ContractViolation("sample count must be >= 1".into()));
    }
    if settings.checkpoint_every == 0 {
        return Err(Error::ContractViolation(
            "checkpoint interval must be >= 1".into(),
        ));
    }
    if matches!(
        settings.optimizer,
        OptimizerKind::ProxSgd | OptimizerKind::ProxGenAdam
    ) && config.conditioner != Conditioner::Identity
    {
        return Err(Error::UnsupportedConfiguration(format!(
            "{} requires the identity conditioner",
            settings.optimizer.name()
        )));
    }
    family::scale_matrix(init, config)?; // validates domain and shapes

    let metrics = MetricContext::new(target, config, rng);
    let mut lambda = init.flatten();
    let mut adam_state = match settings.optimizer {
        OptimizerKind::ProxGenAdam => {
            let mut st = ProxGenAdamState::new(lambda.len(), settings.schedule.base_value());
            if let Some((b1, b2, eps)) = settings.adam {
                st = st.with_hyperparameters(b1, b2, eps)?;
            }
            Some(st)
        }
        _ => None,
    };

    let mut records = Vec::new();
    let mut total_clamps = 0u64;
    let mut iterations_to_eps = None;

    let first = metrics.record(0, &lambda, 0)?;
    let mut last_kl = first.kl;
    if let (Some(eps), Some(kl)) = (settings.eps_kl, first.kl) {
        if kl <= eps {
            iterations_to_eps = Some(0);
        }
    }
    records.push(first);

    let mut t = 0u64;
    while t < settings.max_iters && iterations_to_eps.is_none() {
        let gamma = settings.schedule.gamma(t);
        t += 1;
        let params = VariationalParams::unflatten(config, &lambda)?;
        let clamped = match settings.optimizer {
            OptimizerKind::VanillaSgd => {
                let grad = estimators::total_grad(
                    settings.estimator,
                    &params,
                    config,
                    target,
                    settings.m_samples,
                    rng,
                )?;
                let (next, clamps) = sgd_step(&lambda, &grad.mean, gamma, config)?;
                lambda = next;
                clamps
            }
            OptimizerKind::ProxSgd => {
                let grad =
                    estimators::energy_grad(&params, config, target, settings.m_samples, rng)?;
                lambda = prox_sgd_step(&lambda, &grad.mean, gamma, config)?;
                0
            }
            OptimizerKind::ProxGenAdam => {
                let grad =
                    estimators::energy_grad(&params, config, target, settings.m_samples, rng)?;
                let state = adam_state.as_mut().expect("state initialized above");
                lambda = proxgen_adam_step(&lambda, state, &grad.mean, config)?;
                0
            }
        };
        total_clamps += clamped;
        ensure_finite(&lambda, "iterate")?;

        let track_eps = settings.eps_kl.is_some() && target.as_quadratic().is_some();
        let checkpoint = t % settings.checkpoint_every == 0 || t == settings.max_iters;
        if track_eps || checkpoint {
            let params = VariationalParams::unflatten(config, &lambda)?;
            let kl = metrics.kl(&params);
            if let Some(kl) = kl {
                last_kl = Some(kl);
                if let Some(eps) = settings.eps_kl {
                    if kl <= eps && iterations_to_eps.is_none() {
                        iterations_to_eps = Some(t);
                    }
                }
            }
            if checkpoint || iterations_to_eps == Some(t) {
                records.push(metrics.record(t, &lambda, total_clamps)?);
            }
        }
    }

    Ok(RunOutcome {
        records,
        iterations_to_eps,
        censored: settings.eps_kl.is_some() && iterations_to_eps.is_none(),
        final_kl: last_kl,
        total_clamps,
    })
}
