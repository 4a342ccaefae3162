//! Numerical verification of the identities, constants, bounds and
//! counter-examples that the optimizers and their stepsize schedules rely
//! on. Every check is deterministic under its seed and reports a statistic
//! next to the tolerance it was compared against.

use crate::error::{Error, Result};
use crate::estimators::{self, EstimatorKind};
use crate::family::{self, Conditioner, FamilyConfig, FamilyKind, VariationalParams};
use crate::linalg::{self, Matrix};
use crate::optimizers::{self, OptimizerKind, RunSettings, StepSchedule};
use crate::rng::{self, Stream};
use crate::targets::{QuadraticTarget, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
}

impl CheckStatus {
    pub fn name(self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
        }
    }
}

/// Outcome of one verification check. `status` is `Pass` exactly when the
/// statistic is within the stated tolerance under the check's comparison
/// (always `statistic <= tolerance` here; signed statistics encode
/// one-sided bounds as a difference).
#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub check_name: String,
    pub status: CheckStatus,
    pub statistic: f64,
    pub tolerance: f64,
    pub seed: u64,
    pub detail: String,
}

impl VerificationReport {
    fn from_bound(name: &str, statistic: f64, tolerance: f64, seed: u64, detail: String) -> Self {
        let status = if statistic <= tolerance {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        VerificationReport {
            check_name: name.to_string(),
            status,
            statistic,
            tolerance,
            seed,
            detail,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }
}

/// Welford accumulator for scalar Monte-Carlo statistics.
struct ScalarMoments {
    mean: f64,
    m2: f64,
    n: usize,
}

impl ScalarMoments {
    fn new() -> Self {
        ScalarMoments {
            mean: 0.0,
            m2: 0.0,
            n: 0,
        }
    }

    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn standard_error(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        (self.m2 / (n - 1.0) / n).sqrt()
    }
}

/// Exact Jacobian of the reparameterization map stacked over the flat
/// parameter layout, one row per parameter, one column per output
/// coordinate. For the full-rank check the scale block covers the whole
/// matrix (every entry of C), for which the squared Jacobian collapses to
/// (1 + |u|^2) I exactly. The triangular and mean-field layouts satisfy the
/// same expression as a domination bound, which is what the mean-field
/// variant checks against 1 + |U^2|_F.
fn full_scale_jacobian(u: &[f64]) -> Matrix {
    let d = u.len();
    let p = d + d * d;
    let mut j = Matrix::zeros(p, d);
    for a in 0..d {
        j.set(a, a, 1.0); // location block
    }
    for row in 0..d {
        for col in 0..d {
            // d T_row / d C_{row, col} = u_col
            j.set(d + row * d + col, row, u[col]);
        }
    }
    j
}

fn mean_field_jacobian(u: &[f64]) -> Matrix {
    let d = u.len();
    let mut j = Matrix::zeros(2 * d, d);
    for a in 0..d {
        j.set(a, a, 1.0);
        j.set(d + a, a, u[a]);
    }
    j
}

/// Checks the squared-Jacobian identity of the reparameterization map for
/// dimensions 1..=max_dim with `trials` random draws each.
///
/// Full-rank family: J'J = (1 + |u|^2) I exactly (tolerance 1e-12).
/// Mean-field family: J'J is diagonal with entries 1 + u_i^2, dominated by
/// (1 + |U^2|_F) I where |U^2|_F = sqrt(sum u_i^4); the reported statistic
/// is the worst constraint violation, so it must come out non-positive.
pub fn check_jacobian_identity(
    kind: FamilyKind,
    max_dim: usize,
    trials: usize,
    seed: u64,
) -> VerificationReport {
    let mut rng = rng::stream(seed);
    let tolerance = 1e-12;
    let mut worst = f64::NEG_INFINITY;
    for d in 1..=max_dim {
        let mut u = vec![0.0; d];
        for _ in 0..trials {
            rng::fill_standard_normal(&mut rng, &mut u);
            let dev = match kind {
                FamilyKind::Cholesky => {
                    let j = full_scale_jacobian(&u);
                    let jtj = j.transpose().matmul(&j);
                    let c = 1.0 + linalg::norm_sq(&u);
                    let mut dev = 0.0_f64;
                    for a in 0..d {
                        for b in 0..d {
                            let want = if a == b { c } else { 0.0 };
                            dev = dev.max((jtj.get(a, b) - want).abs());
                        }
                    }
                    dev
                }
                FamilyKind::MeanField => {
                    let j = mean_field_jacobian(&u);
                    let jtj = j.transpose().matmul(&j);
                    let c = 1.0 + u.iter().map(|v| v.powi(4)).sum::<f64>().sqrt();
                    let mut dev = 0.0_f64;
                    for a in 0..d {
                        for b in 0..d {
                            if a == b {
                                // diagonal must not exceed the bound constant
                                dev = dev.max(jtj.get(a, b) - c);
                            } else {
                                dev = dev.max(jtj.get(a, b).abs());
                            }
                        }
                    }
                    dev
                }
            };
            worst = worst.max(dev);
        }
    }
    let name = match kind {
        FamilyKind::Cholesky => "jacobian_identity_cholesky",
        FamilyKind::MeanField => "jacobian_identity_meanfield",
    };
    VerificationReport::from_bound(
        name,
        worst,
        tolerance,
        seed,
        format!("worst deviation over d=1..={max_dim}, {trials} draws each"),
    )
}

/// Monte-Carlo check of the weighted second-moment identity
/// E (1 + |u|^2) |T(u) - z|^2 = (d+1)|m - z|^2 + (d + k) |C|_F^2
/// for the full-rank family (equality within 4 standard errors), and of the
/// corresponding mean-field upper bound.
pub fn check_marginalization(
    params: &VariationalParams,
    config: &FamilyConfig,
    z: &[f64],
    samples: usize,
    seed: u64,
) -> Result<VerificationReport> {
    let c = family::scale_matrix(params, config)?;
    let k = config.base.kurtosis();
    let d = config.dim as f64;
    let dist_sq: f64 = params
        .m
        .iter()
        .zip(z)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let c_frob_sq = c.frobenius_norm_sq();

    let mut rng = rng::stream(seed);
    let mut u = vec![0.0; config.dim];
    let mut moments = ScalarMoments::new();
    for _ in 0..samples {
        config.base.fill_sample(&mut rng, &mut u);
        let t = family::reparameterize(params, config, &u)?;
        let weight = match config.kind {
            FamilyKind::Cholesky => 1.0 + linalg::norm_sq(&u),
            FamilyKind::MeanField => 1.0 + u.iter().map(|v| v.powi(4)).sum::<f64>().sqrt(),
        };
        let sq: f64 = t.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
        moments.push(weight * sq);
    }
    let se = moments.standard_error();
    let (name, statistic, detail) = match config.kind {
        FamilyKind::Cholesky => {
            let closed = (d + 1.0) * dist_sq + (d + k) * c_frob_sq;
            (
                "marginalization_cholesky",
                (moments.mean - closed).abs(),
                format!("|MC - closed form| with MC {:.6e}, closed {:.6e}", moments.mean, closed),
            )
        }
        FamilyKind::MeanField => {
            let bound = ((d * k).sqrt() + k * d.sqrt() + 1.0) * dist_sq
                + (2.0 * k * d.sqrt() + 1.0) * c_frob_sq;
            (
                "marginalization_meanfield",
                moments.mean - bound,
                format!("MC {:.6e} must stay below bound {:.6e}", moments.mean, bound),
            )
        }
    };
    Ok(VerificationReport::from_bound(
        name,
        statistic,
        4.0 * se,
        seed,
        detail,
    ))
}

/// Monte-Carlo check of the expected-smoothness bound
/// E |grad f(a; u) - grad f(b; u)|^2 <= 2 L kappa C(d, phi) B_f(a, b)
/// over random identity-conditioner pairs on a strongly convex quadratic.
pub fn check_expected_smoothness(
    target: &QuadraticTarget,
    config: &FamilyConfig,
    pairs: usize,
    samples: usize,
    seed: u64,
) -> Result<VerificationReport> {
    if config.conditioner != Conditioner::Identity {
        return Err(Error::ContractViolation(
            "the expected-smoothness bound is stated for the linear parameterization".into(),
        ));
    }
    let mut rng = rng::stream(seed);
    let smoothness = target.smoothness();
    let kappa = smoothness / target.strong_convexity();
    let factor = 2.0 * smoothness * kappa * config.variance_constant();
    let wrapped = Target::Quadratic(target.clone());

    let mut worst = f64::NEG_INFINITY;
    let mut worst_detail = String::new();
    for pair in 0..pairs {
        let draw = |r: &mut Stream| {
            let d = config.dim;
            VariationalParams {
                m: (0..d).map(|_| rng::standard_normal(r)).collect(),
                s: (0..d).map(|_| rng::standard_normal(r).abs() + 0.2).collect(),
                lower: (0..config.lower_count())
                    .map(|_| rng::standard_normal(r))
                    .collect(),
            }
        };
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let bregman = family::energy_closed_form(&a, config, target)?
            - family::energy_closed_form(&b, config, target)?
            - linalg::dot(
                &family::energy_grad_closed_form(&b, config, target)?,
                &a.flatten()
                    .iter()
                    .zip(b.flatten().iter())
                    .map(|(x, y)| x - y)
                    .collect::<Vec<_>>(),
            );
        let mut u = vec![0.0; config.dim];
        let mut moments = ScalarMoments::new();
        for _ in 0..samples {
            config.base.fill_sample(&mut rng, &mut u);
            let ga = estimators::energy_grad_at(&a, config, &wrapped, &u)?;
            let gb = estimators::energy_grad_at(&b, config, &wrapped, &u)?;
            let sq: f64 = ga.iter().zip(&gb).map(|(x, y)| (x - y) * (x - y)).sum();
            moments.push(sq);
        }
        let slack = moments.mean - factor * bregman - 4.0 * moments.standard_error();
        if slack > worst {
            worst = slack;
            worst_detail = format!(
                "pair {pair}: MC {:.6e}, bound {:.6e}, 4se {:.3e}",
                moments.mean,
                factor * bregman,
                4.0 * moments.standard_error()
            );
        }
    }
    Ok(VerificationReport::from_bound(
        "expected_smoothness",
        worst,
        0.0,
        seed,
        worst_detail,
    ))
}

/// Measured trace of the single-sample gradient covariance at `params`,
/// with the standard error of that measurement. Shared by the variance and
/// rate checks.
pub fn measure_trace_variance(
    params: &VariationalParams,
    config: &FamilyConfig,
    target: &Target,
    draws: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut rng = rng::stream(seed);
    let mut u = vec![0.0; config.dim];
    let p = config.param_count();
    let mut sum = vec![0.0; p];
    let mut grads: Vec<Vec<f64>> = Vec::with_capacity(draws);
    for _ in 0..draws {
        config.base.fill_sample(&mut rng, &mut u);
        let g = estimators::energy_grad_at(params, config, target, &u)?;
        for (s, gi) in sum.iter_mut().zip(&g) {
            *s += gi;
        }
        grads.push(g);
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / draws as f64).collect();
    let mut sq_moments = ScalarMoments::new();
    for g in &grads {
        let sq: f64 = g.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum();
        sq_moments.push(sq);
    }
    let per_sample = sq_moments.mean * draws as f64 / (draws as f64 - 1.0);
    Ok((per_sample, sq_moments.standard_error()))
}

/// Measures the trace of the single-sample energy-gradient covariance at
/// the family optimum and compares the M-sample variance against
/// (1/M) C(d, phi) L^2 (|zbar - m*|^2 + |C*|_F^2). For quadratic targets
/// the stationary point zbar is the target mean, so the first term drops.
pub fn check_optimum_variance(
    target: &QuadraticTarget,
    config: &FamilyConfig,
    m_samples: usize,
    measure_draws: usize,
    seed: u64,
) -> Result<VerificationReport> {
    let star = target.optimal_params(config)?;
    let c_star = family::scale_matrix(&star, config)?;
    let bound = config.variance_constant() * target.smoothness().powi(2)
        * c_star.frobenius_norm_sq()
        / m_samples as f64;

    let wrapped = Target::Quadratic(target.clone());
    let (per_sample, per_sample_se) =
        measure_trace_variance(&star, config, &wrapped, measure_draws, seed)?;
    let sigma_sq = per_sample / m_samples as f64;
    let se = per_sample_se / m_samples as f64;

    let name = match config.kind {
        FamilyKind::Cholesky => "optimum_variance_cholesky",
        FamilyKind::MeanField => "optimum_variance_meanfield",
    };
    Ok(VerificationReport::from_bound(
        &format!("{name}_d{}", config.dim),
        sigma_sq - bound,
        4.0 * se,
        seed,
        format!("measured {sigma_sq:.6e} against bound {bound:.6e} at M = {m_samples}"),
    ))
}

/// Supremum of -(log phi)'' for the softplus conditioner (the entropy
/// smoothness constant) and of phi * phi'' (the per-coordinate energy
/// smoothness factor), located by a coarse grid scan followed by
/// golden-section refinement.
pub fn softplus_constants() -> (f64, f64) {
    let neg_log_second = |x: f64| {
        let phi = family::softplus(x);
        let d1 = Conditioner::Softplus.deriv(x);
        let d2 = Conditioner::Softplus.second_deriv(x);
        // -(log phi)'' = (phi'^2 - phi'' phi) / phi^2
        (d1 * d1 - d2 * phi) / (phi * phi)
    };
    let energy_factor = |x: f64| family::softplus(x) * Conditioner::Softplus.second_deriv(x);
    (
        maximize_unimodal(neg_log_second, -20.0, 20.0),
        maximize_unimodal(energy_factor, -20.0, 20.0),
    )
}

/// The exp conditioner analog of the entropy smoothness constant:
/// (log exp)'' = 0, identically.
pub fn exp_entropy_smoothness() -> f64 {
    0.0
}

fn maximize_unimodal<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    // coarse scan to bracket the maximum (and confirm a single interior
    // peak via the sign change of the discrete slope)
    let grid = 400usize;
    let mut best_i = 0usize;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=grid {
        let x = lo + (hi - lo) * i as f64 / grid as f64;
        let v = f(x);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let step = (hi - lo) / grid as f64;
    let mut a = lo + step * (best_i.saturating_sub(1)) as f64;
    let mut b = (lo + step * (best_i + 1) as f64).min(hi);
    // golden-section refinement to 1e-8 in the argument
    let inv_phi = 0.6180339887498949;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > 1e-8 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    f(0.5 * (a + b))
}

/// The two-by-two construction on which the convexity statistic goes
/// negative: precision [[1,-2],[-2,5]] with scale [[1,0],[1,1]]. The first
/// coordinate of E g_i u_i equals -1 there.
pub fn check_convexity_counterexample(m_samples: usize, seed: u64) -> Result<VerificationReport> {
    let a = Matrix::from_rows(&[&[1.0, -2.0], &[-2.0, 5.0]])?;
    let target = Target::Quadratic(QuadraticTarget::new(a, vec![0.0; 2], 0.0)?);
    let config = FamilyConfig::cholesky(2, Conditioner::Identity);
    let params = VariationalParams::new(&config, vec![0.0; 2], vec![1.0, 1.0], vec![1.0])?;
    let mut rng = rng::stream(seed);
    let est = estimators::assumption_convexity_stat(&params, &config, &target, m_samples, &mut rng)?;
    Ok(VerificationReport::from_bound(
        "convexity_counterexample",
        (est.mean[0] + 1.0).abs(),
        0.01,
        seed,
        format!(
            "coordinate estimates ({:.5}, {:.5}) at M = {m_samples}; the first must sit at -1",
            est.mean[0], est.mean[1]
        ),
    ))
}

/// Mean-field restriction of the counterexample target: the statistic must
/// be nonnegative on every coordinate (up to Monte-Carlo error).
pub fn check_convexity_meanfield_holds(m_samples: usize, seed: u64) -> Result<VerificationReport> {
    let a = Matrix::from_rows(&[&[1.0, -2.0], &[-2.0, 5.0]])?;
    let target = Target::Quadratic(QuadraticTarget::new(a, vec![0.0; 2], 0.0)?);
    let config = FamilyConfig::mean_field(2, Conditioner::Identity);
    let params = VariationalParams::new(&config, vec![0.0; 2], vec![1.0, 1.0], vec![])?;
    let mut rng = rng::stream(seed);
    let est = estimators::assumption_convexity_stat(&params, &config, &target, m_samples, &mut rng)?;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..2 {
        worst = worst.max(-(est.mean[i] + 4.0 * est.standard_error[i]));
    }
    Ok(VerificationReport::from_bound(
        "convexity_meanfield_holds",
        worst,
        0.0,
        seed,
        format!("estimates ({:.5}, {:.5})", est.mean[0], est.mean[1]),
    ))
}

/// Identity sanity case: with A = C = I the convexity statistic is the
/// second moment of the noise, exactly one per coordinate.
pub fn check_convexity_identity_case(m_samples: usize, seed: u64) -> Result<VerificationReport> {
    let target = Target::Quadratic(QuadraticTarget::isotropic(3, 1.0, vec![0.0; 3])?);
    let config = FamilyConfig::cholesky(3, Conditioner::Identity);
    let params = VariationalParams::isotropic(&config, 1.0)?;
    let mut rng = rng::stream(seed);
    let est = estimators::assumption_convexity_stat(&params, &config, &target, m_samples, &mut rng)?;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..3 {
        worst = worst.max((est.mean[i] - 1.0).abs() - 4.0 * est.standard_error[i]);
    }
    Ok(VerificationReport::from_bound(
        "convexity_identity_case",
        worst,
        0.0,
        seed,
        format!("estimates ({:.5}, {:.5}, {:.5})", est.mean[0], est.mean[1], est.mean[2]),
    ))
}

/// Randomized check of |E J' H J|_2 <= L |E J' J|_2 for Gaussian J and
/// random symmetric H with eigenvalues clipped into [-L, L]. Expectations
/// are estimated elementwise; the 4-SE slack enters through the Frobenius
/// norms of the elementwise standard errors on both sides.
pub fn check_matrix_lemma(trials: usize, draws: usize, seed: u64) -> Result<VerificationReport> {
    let mut worst = f64::NEG_INFINITY;
    let mut worst_detail = String::new();
    for trial in 0..trials {
        let rows = 2 + (trial % 3);
        let cols = 2 + (trial / 3 % 3);
        let l_bound = 0.5 + 2.0 * (trial % 5) as f64;
        let mut r1 = rng::substream(seed, &[trial as u64, 1]);
        let mut r2 = rng::substream(seed, &[trial as u64, 2]);
        let (lhs_mean, lhs_se) = matrix_mean_with_se(cols, draws, &mut r1, |r, out| {
            let j = gaussian_matrix(rows, cols, r);
            let h = clipped_symmetric(rows, l_bound, r);
            *out = j.transpose().matmul(&h).matmul(&j);
        });
        let (rhs_mean, rhs_se) = matrix_mean_with_se(cols, draws, &mut r2, |r, out| {
            let j = gaussian_matrix(rows, cols, r);
            *out = j.transpose().matmul(&j);
        });
        let lhs = linalg::sym_op_norm(&symmetrized(&lhs_mean));
        let rhs = linalg::sym_op_norm(&symmetrized(&rhs_mean));
        let slack = 4.0 * (lhs_se.frobenius_norm_sq().sqrt()
            + l_bound * rhs_se.frobenius_norm_sq().sqrt());
        let violation = lhs - l_bound * rhs - slack;
        if violation > worst {
            worst = violation;
            worst_detail = format!(
                "trial {trial} ({rows}x{cols}, L={l_bound}): lhs {lhs:.5}, L*rhs {:.5}, slack {slack:.3e}",
                l_bound * rhs
            );
        }
    }
    Ok(VerificationReport::from_bound(
        "matrix_lemma",
        worst,
        0.0,
        seed,
        worst_detail,
    ))
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut Stream) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m.set(i, j, rng::standard_normal(rng));
        }
    }
    m
}

fn clipped_symmetric(n: usize, l_bound: f64, rng: &mut Stream) -> Matrix {
    let q = linalg::random_orthogonal(n, rng);
    let eigs: Vec<f64> = (0..n)
        .map(|_| {
            let raw = 2.0 * l_bound * rng::standard_normal(rng);
            raw.clamp(-l_bound, l_bound)
        })
        .collect();
    linalg::sym_from_spectrum(&q, &eigs)
}

fn symmetrized(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s.set(i, j, 0.5 * (a.get(i, j) + a.get(j, i)));
        }
    }
    s
}

fn matrix_mean_with_se<F>(
    n: usize,
    draws: usize,
    rng: &mut Stream,
    mut f: F,
) -> (Matrix, Matrix)
where
    F: FnMut(&mut Stream, &mut Matrix),
{
    let mut mean = Matrix::zeros(n, n);
    let mut m2 = Matrix::zeros(n, n);
    let mut buf = Matrix::zeros(n, n);
    for t in 1..=draws {
        f(rng, &mut buf);
        for i in 0..n {
            for j in 0..n {
                let x = buf.get(i, j);
                let delta = x - mean.get(i, j);
                mean.set(i, j, mean.get(i, j) + delta / t as f64);
                m2.set(i, j, m2.get(i, j) + delta * (x - mean.get(i, j)));
            }
        }
    }
    let mut se = Matrix::zeros(n, n);
    if draws > 1 {
        for i in 0..n {
            for j in 0..n {
                se.set(
                    i,
                    j,
                    (m2.get(i, j) / (draws as f64 - 1.0) / draws as f64).sqrt(),
                );
            }
        }
    }
    (mean, se)
}

/// Runs proximal SGD replications at the theorem's fixed stepsize and
/// compares the mean squared distance to the optimum against twice the
/// bound (1 - gamma mu)^T |l0 - l*|^2 + 2 gamma sigma^2 / mu at each
/// requested horizon. Oversized stepsizes are reported out-of-precondition
/// rather than failed.
pub fn check_rate_bound(
    target: &QuadraticTarget,
    config: &FamilyConfig,
    gamma: f64,
    m_samples: usize,
    replications: usize,
    horizons: &[u64],
    seed: u64,
) -> Result<VerificationReport> {
    let mu = target.strong_convexity();
    let gamma_cap = m_samples as f64
        / (2.0 * target.smoothness() * (target.smoothness() / mu) * config.variance_constant());
    if gamma > gamma_cap {
        return Ok(VerificationReport {
            check_name: "rate_bound".into(),
            status: CheckStatus::Pass,
            statistic: 0.0,
            tolerance: 0.0,
            seed,
            detail: format!(
                "out-of-precondition: gamma {gamma:.3e} exceeds the fixed-stepsize cap {gamma_cap:.3e}"
            ),
        });
    }

    let star = target.optimal_params(config)?;
    let star_flat = star.flatten();
    let init = VariationalParams::isotropic(config, 1.0)?;
    let init_dist_sq: f64 = init
        .flatten()
        .iter()
        .zip(&star_flat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();

    let wrapped = Target::Quadratic(target.clone());
    // sigma^2 is the measured M-sample gradient variance at the optimum
    let (per_sample, _) =
        measure_trace_variance(&star, config, &wrapped, 20_000, rng::derive(seed, &[7]))?;
    let sigma_sq = per_sample / m_samples as f64;
    let max_t = *horizons.iter().max().unwrap_or(&0);
    let mut sums: Vec<f64> = vec![0.0; horizons.len()];
    for rep in 0..replications {
        let mut rng = rng::substream(seed, &[rep as u64]);
        let settings = RunSettings {
            optimizer: OptimizerKind::ProxSgd,
            estimator: EstimatorKind::ClosedFormEntropy,
            schedule: StepSchedule::Fixed(gamma),
            m_samples,
            max_iters: max_t,
            checkpoint_every: 1,
            eps_kl: None,
            adam: None,
        };
        let out = optimizers::run(&wrapped, config, &init, &settings, &mut rng)?;
        for (hi, &h) in horizons.iter().enumerate() {
            let rec = out
                .records
                .iter()
                .find(|r| r.iteration == h)
                .ok_or_else(|| Error::NumericFailure("missing checkpoint".into()))?;
            sums[hi] += rec.param_dist_sq.unwrap_or(f64::NAN);
        }
    }

    let mut worst = f64::NEG_INFINITY;
    let mut detail = String::new();
    for (hi, &h) in horizons.iter().enumerate() {
        let mean = sums[hi] / replications as f64;
        let bound = (1.0 - gamma * mu).powi(h as i32) * init_dist_sq + 2.0 * gamma * sigma_sq / mu;
        let ratio_violation = mean - 2.0 * bound;
        if ratio_violation > worst {
            worst = ratio_violation;
        }
        detail.push_str(&format!("T={h}: mean {mean:.4e} vs 2*bound {:.4e}; ", 2.0 * bound));
    }
    Ok(VerificationReport::from_bound(
        "rate_bound",
        worst,
        0.0,
        seed,
        detail,
    ))
}

/// Runs the whole verification suite with seeds derived from `base_seed`.
pub fn run_all(base_seed: u64) -> Result<Vec<VerificationReport>> {
    let mut reports = Vec::new();

    reports.push(check_jacobian_identity(
        FamilyKind::Cholesky,
        8,
        100,
        rng::derive(base_seed, &[1]),
    ));
    reports.push(check_jacobian_identity(
        FamilyKind::MeanField,
        8,
        100,
        rng::derive(base_seed, &[2]),
    ));

    // marginalization identity at a generic point
    let chol_config = FamilyConfig::cholesky(3, Conditioner::Identity);
    let params = VariationalParams::new(
        &chol_config,
        vec![0.4, -0.2, 1.0],
        vec![0.9, 1.4, 0.6],
        vec![0.3, -0.7, 0.2],
    )?;
    reports.push(check_marginalization(
        &params,
        &chol_config,
        &[1.0, 0.0, -1.0],
        200_000,
        rng::derive(base_seed, &[3]),
    )?);
    let mf_config = FamilyConfig::mean_field(3, Conditioner::Identity);
    let params = VariationalParams::new(&mf_config, vec![0.4, -0.2, 1.0], vec![0.9, 1.4, 0.6], vec![])?;
    reports.push(check_marginalization(
        &params,
        &mf_config,
        &[1.0, 0.0, -1.0],
        200_000,
        rng::derive(base_seed, &[4]),
    )?);

    // expected smoothness on a conditioned quadratic
    let mut gen_rng = rng::substream(base_seed, &[5]);
    let target = crate::harness::make_conditioned_gaussian(5, 10.0, 10.0, &mut gen_rng)?;
    reports.push(check_expected_smoothness(
        &target,
        &FamilyConfig::cholesky(5, Conditioner::Identity),
        20,
        20_000,
        rng::derive(base_seed, &[6]),
    )?);

    // optimum variance for both families across dimensions
    for (i, d) in [1usize, 5, 10].iter().enumerate() {
        let mut r = rng::substream(base_seed, &[7, i as u64]);
        let dense = if *d == 1 {
            QuadraticTarget::isotropic(1, 2.0, vec![0.3])?
        } else {
            crate::harness::make_conditioned_gaussian(*d, 10.0, 10.0, &mut r)?
        };
        reports.push(check_optimum_variance(
            &dense,
            &FamilyConfig::cholesky(*d, Conditioner::Identity),
            1,
            100_000,
            rng::derive(base_seed, &[8, i as u64]),
        )?);
        // mean-field optimum requires a diagonal precision
        let mut diag = Matrix::zeros(*d, *d);
        for k in 0..*d {
            diag.set(k, k, 1.0 + 9.0 * k as f64 / (*d).max(2) as f64);
        }
        let diag_target = QuadraticTarget::new(diag, vec![0.1; *d], 0.0)?;
        reports.push(check_optimum_variance(
            &diag_target,
            &FamilyConfig::mean_field(*d, Conditioner::Identity),
            1,
            100_000,
            rng::derive(base_seed, &[9, i as u64]),
        )?);
    }

    // softplus constants against their reference values
    let (l_h, l_s) = softplus_constants();
    reports.push(VerificationReport::from_bound(
        "softplus_entropy_smoothness",
        (l_h - 0.167096).abs(),
        1e-3,
        0,
        format!("located supremum {l_h:.8}"),
    ));
    reports.push(VerificationReport::from_bound(
        "softplus_energy_smoothness_factor",
        (l_s - 0.26034).abs(),
        1e-3,
        0,
        format!("located supremum {l_s:.8}"),
    ));
    reports.push(VerificationReport::from_bound(
        "exp_entropy_smoothness",
        exp_entropy_smoothness(),
        0.0,
        0,
        "identically zero".into(),
    ));

    reports.push(check_convexity_counterexample(
        1_000_000,
        rng::derive(base_seed, &[10]),
    )?);
    reports.push(check_convexity_meanfield_holds(
        200_000,
        rng::derive(base_seed, &[11]),
    )?);
    reports.push(check_convexity_identity_case(
        200_000,
        rng::derive(base_seed, &[12]),
    )?);

    reports.push(check_matrix_lemma(50, 20_000, rng::derive(base_seed, &[13]))?);

    let mut r = rng::substream(base_seed, &[14]);
    let rate_target = crate::harness::make_conditioned_gaussian(5, 10.0, 10.0, &mut r)?;
    let config = FamilyConfig::cholesky(5, Conditioner::Identity);
    let m_samples = 10;
    let kappa = rate_target.smoothness() / rate_target.strong_convexity();
    let gamma = m_samples as f64
        / (2.0 * rate_target.smoothness() * kappa * config.variance_constant());
    reports.push(check_rate_bound(
        &rate_target,
        &config,
        gamma,
        m_samples,
        20,
        &[100, 1000, 10_000],
        rng::derive(base_seed, &[15]),
    )?);

    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_identity_hand_cases() {
        // d=2 full scale, u=(1,2): constant is 6
        let u = [1.0, 2.0];
        let j = full_scale_jacobian(&u);
        let jtj = j.transpose().matmul(&j);
        for a in 0..2 {
            for b in 0..2 {
                let want = if a == b { 6.0 } else { 0.0 };
                assert!((jtj.get(a, b) - want).abs() <= 1e-12);
            }
        }
        // d=1: 1 + u^2
        let u = [0.7];
        let j = full_scale_jacobian(&u);
        let jtj = j.transpose().matmul(&j);
        assert!((jtj.get(0, 0) - 1.49).abs() <= 1e-12);

        // mean-field d=3, u=(1,1,1): bound constant 1 + sqrt(3)
        let rep = check_jacobian_identity(FamilyKind::MeanField, 3, 50, 1);
        assert!(rep.passed());
        let c = 1.0 + 3.0_f64.sqrt();
        let u = [1.0, 1.0, 1.0];
        let j = mean_field_jacobian(&u);
        let jtj = j.transpose().matmul(&j);
        for a in 0..3 {
            assert!(jtj.get(a, a) <= c + 1e-12);
        }
    }

    #[test]
    fn jacobian_identity_passes_all_dims() {
        assert!(check_jacobian_identity(FamilyKind::Cholesky, 8, 100, 5).passed());
        assert!(check_jacobian_identity(FamilyKind::MeanField, 8, 100, 6).passed());
    }

    #[test]
    fn marginalization_exact_cases() {
        // m = z, C = I, d = 3: closed form is (d + k) * d = 18
        let config = FamilyConfig::cholesky(3, Conditioner::Identity);
        let params = VariationalParams::isotropic(&config, 1.0).unwrap();
        let rep = check_marginalization(&params, &config, &[0.0; 3], 100_000, 21).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.detail.contains("1.8"), "detail: {}", rep.detail);

        // tiny scale: the weighted moment approaches (d+1)|m - z|^2
        let params =
            VariationalParams::new(&config, vec![1.0, 1.0, 1.0], vec![1e-8; 3], vec![0.0; 3])
                .unwrap();
        let rep = check_marginalization(&params, &config, &[0.0; 3], 100_000, 22).unwrap();
        assert!(rep.passed(), "{rep:?}");

        // z = m with arbitrary C: (d + k) |C|_F^2
        let params = VariationalParams::new(
            &config,
            vec![0.5, -0.5, 0.0],
            vec![0.5, 2.0, 1.0],
            vec![0.4, -0.6, 1.2],
        )
        .unwrap();
        let rep = check_marginalization(&params, &config, &[0.5, -0.5, 0.0], 100_000, 23).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn softplus_constants_match_references() {
        let (l_h, l_s) = softplus_constants();
        assert!((l_h - 0.167096).abs() < 1e-3, "L_h = {l_h}");
        assert!((l_s - 0.26034).abs() < 1e-3, "L_s factor = {l_s}");
        assert_eq!(exp_entropy_smoothness(), 0.0);
    }

    #[test]
    fn counterexample_detects_negative_coordinate() {
        let rep = check_convexity_counterexample(200_000, 3).unwrap();
        // at the smaller sample count we only require the sign and rough size
        assert!(rep.statistic < 0.05, "{rep:?}");
        assert!(check_convexity_meanfield_holds(100_000, 4).unwrap().passed());
        assert!(check_convexity_identity_case(100_000, 5).unwrap().passed());
    }

    #[test]
    fn matrix_lemma_equality_and_zero() {
        // H = L I: the lemma is an equality up to Monte-Carlo error, so the
        // signed statistic sits near zero but below the slack
        let rep = check_matrix_lemma(6, 10_000, 9).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn expected_smoothness_small() {
        let mut r = rng::stream(2);
        let target = crate::harness::make_conditioned_gaussian(3, 4.0, 4.0, &mut r).unwrap();
        let rep = check_expected_smoothness(
            &target,
            &FamilyConfig::cholesky(3, Conditioner::Identity),
            5,
            5_000,
            11,
        )
        .unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn optimum_variance_1d() {
        let target = QuadraticTarget::isotropic(1, 1.0, vec![0.0]).unwrap();
        let rep = check_optimum_variance(
            &target,
            &FamilyConfig::cholesky(1, Conditioner::Identity),
            1,
            50_000,
            13,
        )
        .unwrap();
        assert!(rep.passed(), "{rep:?}");
        // bound is C(1, phi) L^2 |C*|^2 = 4
        assert!(rep.detail.contains("4.0"), "{}", rep.detail);
    }

    #[test]
    fn rate_bound_gate() {
        let mut r = rng::stream(3);
        let target = crate::harness::make_conditioned_gaussian(3, 5.0, 5.0, &mut r).unwrap();
        let config = FamilyConfig::cholesky(3, Conditioner::Identity);
        let rep = check_rate_bound(&target, &config, 10.0, 10, 2, &[10], 15).unwrap();
        assert!(rep.detail.contains("out-of-precondition"), "{}", rep.detail);
        assert!(rep.passed());
    }
}
