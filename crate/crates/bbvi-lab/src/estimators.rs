//! Monte-Carlo gradient estimators over the flattened parameter vector.
//!
//! The chain rule through z = C u + m sends a gradient g = grad l(z) to
//!
//! - g_i on the location coordinate m_i,
//! - phi'(s_i) u_i g_i on the diagonal pre-parameter s_i,
//! - u_j g_i on the off-diagonal entry L_ij (j < i).
//!
//! Two total-gradient estimators are provided. The closed-form-entropy
//! estimator adds the exact entropy gradient to the Monte-Carlo energy
//! gradient. The sticking-the-landing estimator instead differentiates the
//! sampled log density along the path with its distribution parameters held
//! fixed, which cancels the energy gradient sample-by-sample when the
//! variational distribution equals the target posterior.

use crate::error::{Error, Result};
use crate::family::{self, FamilyConfig, FamilyKind, VariationalParams};
use crate::linalg::{self, Matrix};
use crate::rng::Stream;
use crate::targets::Target;

/// Result of an M-sample gradient estimation.
#[derive(Debug, Clone)]
pub struct GradientEstimate {
    /// Sample mean of the per-sample gradients (flat layout).
    pub mean: Vec<f64>,
    /// Trace of the unbiased sample covariance of a single-sample gradient.
    /// Zero when only one sample was drawn.
    pub per_sample_trace_variance: f64,
    pub samples_used: usize,
}

/// Per-coordinate Monte-Carlo mean with its standard error.
#[derive(Debug, Clone)]
pub struct MomentEstimate {
    pub mean: Vec<f64>,
    pub standard_error: Vec<f64>,
    pub samples_used: usize,
}

/// Which total-gradient estimator an optimizer run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    /// Monte-Carlo energy gradient plus the exact entropy gradient.
    ClosedFormEntropy,
    /// Path gradient of the energy plus the path gradient of the stopped
    /// log density.
    StickingTheLanding,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::ClosedFormEntropy => "cfe",
            EstimatorKind::StickingTheLanding => "stl",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cfe" => Ok(EstimatorKind::ClosedFormEntropy),
            "stl" => Ok(EstimatorKind::StickingTheLanding),
            other => Err(Error::Config(format!("unknown estimator '{other}'"))),
        }
    }
}

/// Streaming mean/variance accumulator (Welford), one slot per coordinate.
struct MomentAccumulator {
    mean: Vec<f64>,
    m2: Vec<f64>,
    n: usize,
}

impl MomentAccumulator {
    fn new(len: usize) -> Self {
        MomentAccumulator {
            mean: vec![0.0; len],
            m2: vec![0.0; len],
            n: 0,
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for i in 0..x.len() {
            let delta = x[i] - self.mean[i];
            self.mean[i] += delta / n;
            self.m2[i] += delta * (x[i] - self.mean[i]);
        }
    }

    fn trace_variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.m2.iter().sum::<f64>() / (self.n as f64 - 1.0)
    }

    fn standard_errors(&self) -> Vec<f64> {
        if self.n < 2 {
            return vec![0.0; self.mean.len()];
        }
        let n = self.n as f64;
        self.m2.iter().map(|m2| (m2 / (n - 1.0) / n).sqrt()).collect()
    }
}

fn apply_chain_rule(
    config: &FamilyConfig,
    params: &VariationalParams,
    u: &[f64],
    g: &[f64],
    out: &mut [f64],
) {
    let d = config.dim;
    out[..d].copy_from_slice(g);
    for i in 0..d {
        out[d + i] = config.conditioner.deriv(params.s[i]) * u[i] * g[i];
    }
    if config.kind == FamilyKind::Cholesky {
        for i in 1..d {
            for j in 0..i {
                out[2 * d + family::lower_index(i, j)] = u[j] * g[i];
            }
        }
    }
}

fn reparameterize_with_scale(c: &Matrix, m: &[f64], u: &[f64], z: &mut [f64]) {
    let d = m.len();
    for i in 0..d {
        let mut acc = m[i];
        for j in 0..=i {
            acc += c.get(i, j) * u[j];
        }
        z[i] = acc;
    }
}

/// Single-sample gradient of lambda -> l(T_lambda(u)) at a fixed u. This is
/// the exact chain rule, so it matches finite differences of that map.
pub fn energy_grad_at(
    params: &VariationalParams,
    config: &FamilyConfig,
    target: &Target,
    u: &[f64],
) -> Result<Vec<f64>> {
    let c = family::scale_matrix(params, config)?;
    let mut z = vec![0.0; config.dim];
    reparameterize_with_scale(&c, &params.m, u, &mut z);
    let g = target.grad_neg_log_joint(&z)?;
    let mut out = vec![0.0; config.param_count()];
    apply_chain_rule(config, params, u, &g, &mut out);
    Ok(out)
}

/// Single-sample sticking-the-landing gradient at a fixed u: the chain rule
/// applied to grad l(z) + grad_z log q(z), the latter evaluated with the
/// density parameters frozen at the current values.
pub fn stl_grad_at(
    params: &VariationalParams,
    config: &FamilyConfig,
    target: &Target,
    u: &[f64],
) -> Result<Vec<f64>> {
    let c = family::scale_matrix(params, config)?;
    let mut z = vec![0.0; config.dim];
    reparameterize_with_scale(&c, &params.m, u, &mut z);
    let g = target.grad_neg_log_joint(&z)?;
    // grad_z log q(z) = -C^{-T} C^{-1} (z - m) = -C^{-T} u
    let score = linalg::solve_lower_transpose(&c, u);
    let combined: Vec<f64> = g.iter().zip(&score).map(|(gi, si)| gi - si).collect();
    let mut out = vec![0.0; config.param_count()];
    apply_chain_rule(config, params, u, &combined, &mut out);
    Ok(out)
}

fn estimate_over_samples<F>(
    params: &VariationalParams,
    config: &FamilyConfig,
    target: &Target,
    m_samples: usize,
    rng: &mut Stream,
    mut per_sample: F,
) -> Result<GradientEstimate>
where
    F: FnMut(&Matrix, &[f64], &[f64], &mut [f64]) -> Result<()>,
{
    if m_samples == 0 {
        return Err(Error::ContractViolation("sample count must be >= 1".into()));
    }
    if target.dim() != config.dim {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            got: config.dim,
        });
    }
    let c = family::scale_matrix(params, config)?;
    let p = config.param_count();
    let mut acc = MomentAccumulator::new(p);
    let mut u = vec![0.0; config.dim];
    let mut z = vec![0.0; config.dim];
    let mut grad = vec![0.0; p];
    for _ in 0..m_samples {
        config.base.fill_sample(rng, &mut u);
        reparameterize_with_scale(&c, &params.m, &u, &mut z);
        per_sample(&c, &u, &z, &mut grad)?;
        acc.push(&grad);
    }
    let per_sample_trace_variance = acc.trace_variance();
    Ok(GradientEstimate {
        mean: acc.mean,
        per_sample_trace_variance,
        samples_used: m_samples,
    })
}

/// M-sample reparameterization gradient of the energy term.
pub fn energy_grad(
    params: &VariationalParams,
    config: &FamilyConfig,
    target: &Target,
    m_samples: usize,
    rng: &mut Stream,
) -> Result<GradientEstimate> {
    estimate_over_samples(params, config, target, m_samples, rng, |_, u, z, out| {
        let g = target.grad_neg_log_joint(z)?;
        apply_chain_rule(config, params, u, &g, out);
        Ok(())
    })
}

/// Closed-form-entropy estimator of the total gradient: the Monte-Carlo
/// energy gradient plus the exact entropy gradient.
pub fn total_grad_cfe(
    params: &VariationalParams,
    config: &FamilyConfig,
    target: &Target,
    m_samples: usize,
    rng: &mut Stream,
) -> Result<GradientEstimate> {
    let entropy = family::neg_entropy_grad(params, config)?;
    let mut est = estimate_over_samples(params, config, target, m_samples, rng, |_, u, z, out| {
        let g = target.grad_neg_log_joint(z)?;
        apply_chain_rule(config, params, u, &g, out);
        Ok(())
    })?;
    for (m, e) in est.mean.iter_mut().zip(entropy.iter()) {
        *m += e;
    }
    Ok(est)
}

/// Sticking-the-landing estimator of the total gradient.
pub fn total_grad_stl(
    params: &VariationalParams,
    config: &FamilyConfig,
    target: &Target,
    m_samples: usize,
    rng: &mut Stream,
) -> Result<GradientEstimate> {
    estimate_over_samples(params, config, target, m_samples, rng, |c, u, z, out| {
        let g = target.grad_neg_log_joint(z)?;
        let score = linalg::solve_lower_transpose(c, u);
        let combined: Vec<f64> = g.iter().zip(&score).map(|(gi, si)| gi - si).collect();
        apply_chain_rule(config, params, u, &combined, out);
        Ok(())
    })
}

/// Dispatches on the estimator kind.
pub fn total_grad(
    kind: EstimatorKind,
    params: &VariationalParams,
    config: &FamilyConfig,
    target: &Target,
    m_samples: usize,
    rng: &mut Stream,
) -> Result<GradientEstimate> {
    match kind {
        EstimatorKind::ClosedFormEntropy => total_grad_cfe(params, config, target, m_samples, rng),
        EstimatorKind::StickingTheLanding => total_grad_stl(params, config, target, m_samples, rng),
    }
}

/// Per-coordinate estimate of E g_i(lambda; u) u_i, the statistic whose
/// non-negativity certifies convexity of the energy.
pub fn assumption_convexity_stat(
    params: &VariationalParams,
    config: &FamilyConfig,
    target: &Target,
    m_samples: usize,
    rng: &mut Stream,
) -> Result<MomentEstimate> {
    if m_samples == 0 {
        return Err(Error::ContractViolation("sample count must be >= 1".into()));
    }
    let c = family::scale_matrix(params, config)?;
    let d = config.dim;
    let mut acc = MomentAccumulator::new(d);
    let mut u = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut stat = vec![0.0; d];
    for _ in 0..m_samples {
        config.base.fill_sample(rng, &mut u);
        reparameterize_with_scale(&c, &params.m, &u, &mut z);
        let g = target.grad_neg_log_joint(&z)?;
        for i in 0..d {
            stat[i] = g[i] * u[i];
        }
        acc.push(&stat);
    }
    Ok(MomentEstimate {
        standard_error: acc.standard_errors(),
        mean: acc.mean,
        samples_used: m_samples,
    })
}

/// Per-coordinate estimate of E g_i(lambda; u) u_i phi''(s_i), the statistic
/// whose boundedness certifies smoothness of the energy under a nonlinear
/// conditioner.
pub fn assumption_smoothness_stat(
    params: &VariationalParams,
    config: &FamilyConfig,
    target: &Target,
    m_samples: usize,
    rng: &mut Stream,
) -> Result<MomentEstimate> {
    if m_samples == 0 {
        return Err(Error::ContractViolation("sample count must be >= 1".into()));
    }
    let c = family::scale_matrix(params, config)?;
    let d = config.dim;
    let second: Vec<f64> = params
        .s
        .iter()
        .map(|&si| config.conditioner.second_deriv(si))
        .collect();
    let mut acc = MomentAccumulator::new(d);
    let mut u = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut stat = vec![0.0; d];
    for _ in 0..m_samples {
        config.base.fill_sample(rng, &mut u);
        reparameterize_with_scale(&c, &params.m, &u, &mut z);
        let g = target.grad_neg_log_joint(&z)?;
        for i in 0..d {
            stat[i] = g[i] * u[i] * second[i];
        }
        acc.push(&stat);
    }
    Ok(MomentEstimate {
        standard_error: acc.standard_errors(),
        mean: acc.mean,
        samples_used: m_samples,
    })
}

/// Central finite differences of a scalar objective over a flat parameter
/// vector. The oracle every analytic gradient in this crate is checked
/// against.
pub fn finite_difference<F>(mut objective: F, lambda: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if step <= 0.0 {
        return Err(Error::ContractViolation(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let mut grad = vec![0.0; lambda.len()];
    let mut point = lambda.to_vec();
    for i in 0..lambda.len() {
        point[i] = lambda[i] + step;
        let up = objective(&point)?;
        point[i] = lambda[i] - step;
        let down = objective(&point)?;
        point[i] = lambda[i];
        grad[i] = (up - down) / (2.0 * step);
    }
    Ok(grad)
}
