//! Differentiable negative-log-joint targets.
//!
//! Every target exposes a scalar value and an exact gradient, nothing more;
//! the optimizers treat them as black boxes. The quadratic target also knows
//! its exact posterior, which drives the closed-form KL and the convergence
//! metrics.

use crate::error::{Error, Result};
use crate::family::{Conditioner, FamilyConfig, FamilyKind, VariationalParams};
use crate::linalg::{self, Matrix};

/// Gaussian negative log joint l(z) = (1/2) (z - mean)' A (z - mean) + offset
/// with A symmetric positive definite. The exact posterior is
/// N(mean, A^{-1}).
#[derive(Debug, Clone)]
pub struct QuadraticTarget {
    a: Matrix,
    mean: Vec<f64>,
    offset: f64,
    chol: Matrix,
    lambda_min: f64,
    lambda_max: f64,
}

impl QuadraticTarget {
    /// Requires an exactly symmetric positive-definite matrix. Extreme
    /// eigenvalues are computed once at construction since the stepsize
    /// schedules depend on them.
    pub fn new(a: Matrix, mean: Vec<f64>, offset: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                got: a.cols(),
            });
        }
        if mean.len() != a.rows() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                got: mean.len(),
            });
        }
        if a.max_abs_asymmetry() != 0.0 {
            return Err(Error::ContractViolation(
                "quadratic target matrix must be exactly symmetric".into(),
            ));
        }
        let chol = linalg::cholesky(&a)?;
        let (lambda_min, lambda_max) = linalg::sym_extreme_eigenvalues(&a);
        Ok(QuadraticTarget {
            a,
            mean,
            offset,
            chol,
            lambda_min,
            lambda_max,
        })
    }

    /// scale * I precision with the given mean.
    pub fn isotropic(dim: usize, scale: f64, mean: Vec<f64>) -> Result<Self> {
        let mut a = Matrix::zeros(dim, dim);
        for i in 0..dim {
            a.set(i, i, scale);
        }
        QuadraticTarget::new(a, mean, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Lower Cholesky factor of A.
    pub fn chol(&self) -> &Matrix {
        &self.chol
    }

    /// log det A through the Cholesky diagonal.
    pub fn log_det(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim() {
            acc += 2.0 * self.chol.get(i, i).ln();
        }
        acc
    }

    /// Strong convexity constant, the smallest eigenvalue of A.
    pub fn strong_convexity(&self) -> f64 {
        self.lambda_min
    }

    /// Smoothness constant, the largest eigenvalue of A.
    pub fn smoothness(&self) -> f64 {
        self.lambda_max
    }

    pub fn neg_log_joint(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: z.len(),
            });
        }
        let delta: Vec<f64> = z.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        Ok(0.5 * self.a.quad_form(&delta) + self.offset)
    }

    pub fn grad_neg_log_joint(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: z.len(),
            });
        }
        let delta: Vec<f64> = z.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        Ok(self.a.matvec(&delta))
    }

    /// The minimizer of the composite objective over the family: location
    /// equal to the target mean and scale equal to the lower Cholesky factor
    /// of A^{-1} (positive diagonal).
    ///
    /// Only the identity conditioner is supported, and the mean-field family
    /// only when A is diagonal (otherwise the mean-field optimum is not the
    /// exact posterior).
    pub fn optimal_params(&self, config: &FamilyConfig) -> Result<VariationalParams> {
        if config.dim != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: config.dim,
            });
        }
        if config.conditioner != Conditioner::Identity {
            return Err(Error::ContractViolation(
                "optimal parameters are defined for the identity conditioner".into(),
            ));
        }
        match config.kind {
            FamilyKind::Cholesky => {
                let inv = linalg::spd_inverse_from_chol(&self.chol);
                let c_star = linalg::cholesky(&inv)?;
                VariationalParams::from_scale(config, self.mean.clone(), &c_star)
            }
            FamilyKind::MeanField => {
                for i in 0..self.dim() {
                    for j in 0..self.dim() {
                        if i != j && self.a.get(i, j) != 0.0 {
                            return Err(Error::UnsupportedConfiguration(
                                "mean-field optimum requires a diagonal precision matrix".into(),
                            ));
                        }
                    }
                }
                let s: Vec<f64> = (0..self.dim())
                    .map(|i| 1.0 / self.a.get(i, i).sqrt())
                    .collect();
                VariationalParams::new(config, self.mean.clone(), s, vec![])
            }
        }
    }
}

/// Bayesian logistic regression with labels in {-1, +1} and a Gaussian
/// prior of precision alpha:
/// l(z) = sum_i log(1 + exp(-y_i x_i' z)) + (alpha / 2) |z|^2.
///
/// Strong convexity is alpha; the smoothness constant is the upper bound
/// alpha + lambda_max(X'X) / 4.
#[derive(Debug, Clone)]
pub struct LogisticTarget {
    x: Matrix,
    y: Vec<f64>,
    alpha: f64,
    smoothness: f64,
}

impl LogisticTarget {
    pub fn new(x: Matrix, y: Vec<f64>, alpha: f64) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(Error::DimensionMismatch {
                expected: x.rows(),
                got: y.len(),
            });
        }
        if alpha <= 0.0 {
            return Err(Error::ContractViolation(format!(
                "prior precision must be positive, got {alpha}"
            )));
        }
        for (i, &yi) in y.iter().enumerate() {
            if yi != 1.0 && yi != -1.0 {
                return Err(Error::ContractViolation(format!(
                    "labels must be -1 or +1, got y[{i}] = {yi}"
                )));
            }
        }
        let xtx = x.transpose().matmul(&x);
        let smoothness = alpha + 0.25 * linalg::spd_lambda_max(&xtx);
        Ok(LogisticTarget {
            x,
            y,
            alpha,
            smoothness,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn strong_convexity(&self) -> f64 {
        self.alpha
    }

    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn neg_log_joint(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: z.len(),
            });
        }
        let mut acc = 0.5 * self.alpha * linalg::norm_sq(z);
        for i in 0..self.x.rows() {
            let mut t = 0.0;
            for j in 0..self.x.cols() {
                t += self.x.get(i, j) * z[j];
            }
            acc += crate::family::softplus(-self.y[i] * t);
        }
        Ok(acc)
    }

    pub fn grad_neg_log_joint(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: z.len(),
            });
        }
        let mut grad: Vec<f64> = z.iter().map(|v| self.alpha * v).collect();
        for i in 0..self.x.rows() {
            let mut t = 0.0;
            for j in 0..self.x.cols() {
                t += self.x.get(i, j) * z[j];
            }
            // d/dt softplus(-y t) = -y sigmoid(-y t)
            let w = -self.y[i] * crate::family::sigmoid(-self.y[i] * t);
            for j in 0..self.x.cols() {
                grad[j] += w * self.x.get(i, j);
            }
        }
        Ok(grad)
    }
}

/// A target the optimizers can run against.
#[derive(Debug, Clone)]
pub enum Target {
    Quadratic(QuadraticTarget),
    Logistic(LogisticTarget),
}

impl Target {
    pub fn dim(&self) -> usize {
        match self {
            Target::Quadratic(t) => t.dim(),
            Target::Logistic(t) => t.dim(),
        }
    }

    pub fn neg_log_joint(&self, z: &[f64]) -> Result<f64> {
        match self {
            Target::Quadratic(t) => t.neg_log_joint(z),
            Target::Logistic(t) => t.neg_log_joint(z),
        }
    }

    pub fn grad_neg_log_joint(&self, z: &[f64]) -> Result<Vec<f64>> {
        match self {
            Target::Quadratic(t) => t.grad_neg_log_joint(z),
            Target::Logistic(t) => t.grad_neg_log_joint(z),
        }
    }

    pub fn strong_convexity(&self) -> f64 {
        match self {
            Target::Quadratic(t) => t.strong_convexity(),
            Target::Logistic(t) => t.strong_convexity(),
        }
    }

    pub fn smoothness(&self) -> f64 {
        match self {
            Target::Quadratic(t) => t.smoothness(),
            Target::Logistic(t) => t.smoothness(),
        }
    }

    pub fn as_quadratic(&self) -> Option<&QuadraticTarget> {
        match self {
            Target::Quadratic(t) => Some(t),
            Target::Logistic(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn example_matrix() -> Matrix {
        Matrix::from_rows(&[&[1.0, -2.0], &[-2.0, 5.0]]).unwrap()
    }

    #[test]
    fn quadratic_values() {
        let t = QuadraticTarget::new(Matrix::identity(2), vec![0.0, 0.0], 0.0).unwrap();
        assert_eq!(t.neg_log_joint(&[0.0, 0.0]).unwrap(), 0.0);

        let t = QuadraticTarget::new(example_matrix(), vec![0.0, 0.0], 0.0).unwrap();
        assert!((t.neg_log_joint(&[1.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadratic_gradient() {
        let t = QuadraticTarget::new(example_matrix(), vec![0.0, 0.0], 0.0).unwrap();
        let g = t.grad_neg_log_joint(&[1.0, 0.0]).unwrap();
        assert_eq!(g, vec![1.0, -2.0]);

        let t = QuadraticTarget::new(example_matrix(), vec![0.4, -0.9], 3.0).unwrap();
        let g = t.grad_neg_log_joint(&[0.4, -0.9]).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn quadratic_rejects_bad_input() {
        let asym = Matrix::from_rows(&[&[1.0, 0.1], &[0.2, 1.0]]).unwrap();
        assert!(QuadraticTarget::new(asym, vec![0.0; 2], 0.0).is_err());
        let indef = Matrix::from_rows(&[&[1.0, 3.0], &[3.0, 1.0]]).unwrap();
        assert!(QuadraticTarget::new(indef, vec![0.0; 2], 0.0).is_err());
        let t = QuadraticTarget::new(example_matrix(), vec![0.0; 2], 0.0).unwrap();
        assert!(t.neg_log_joint(&[1.0]).is_err());
    }

    #[test]
    fn quadratic_two_sided_bounds() {
        // offset-corrected value is sandwiched by the extreme eigenvalues
        let t = QuadraticTarget::new(example_matrix(), vec![0.5, -0.5], 2.0).unwrap();
        let mu = t.strong_convexity();
        let l = t.smoothness();
        let mut r = rng::stream(17);
        for _ in 0..200 {
            let z: Vec<f64> = (0..2).map(|_| 3.0 * rng::standard_normal(&mut r)).collect();
            let dist_sq: f64 = z
                .iter()
                .zip(t.mean())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let v = t.neg_log_joint(&z).unwrap() - t.offset();
            assert!(v + 1e-12 >= 0.5 * mu * dist_sq);
            assert!(v <= 0.5 * l * dist_sq + 1e-12);
        }
    }

    #[test]
    fn logistic_value_at_zero() {
        // a single all-zero regressor row gives log 2 regardless of label
        let x = Matrix::from_rows(&[&[0.0, 0.0, 0.0]]).unwrap();
        let t = LogisticTarget::new(x, vec![1.0], 1.0).unwrap();
        let v = t.neg_log_joint(&[0.0, 0.0, 0.0]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn logistic_rejects_bad_labels() {
        let x = Matrix::from_rows(&[&[1.0]]).unwrap();
        assert!(LogisticTarget::new(x.clone(), vec![0.5], 1.0).is_err());
        assert!(LogisticTarget::new(x, vec![1.0], 0.0).is_err());
    }

    fn random_logistic(rng: &mut rng::Stream, n: usize, d: usize) -> LogisticTarget {
        let mut x = Matrix::zeros(n, d);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            for j in 0..d {
                x.set(i, j, rng::standard_normal(rng));
            }
            y.push(if rng::standard_normal(rng) > 0.0 { 1.0 } else { -1.0 });
        }
        LogisticTarget::new(x, y, 0.7).unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng::stream(4);
        let quad = QuadraticTarget::new(example_matrix(), vec![0.2, 0.8], 1.5).unwrap();
        let logistic = random_logistic(&mut r, 12, 3);
        let h = 1e-6;
        for trial in 0..100 {
            let d_q = 2;
            let z: Vec<f64> = (0..d_q).map(|_| 2.0 * rng::standard_normal(&mut r)).collect();
            let g = quad.grad_neg_log_joint(&z).unwrap();
            let fd = central_diff(|p| quad.neg_log_joint(p).unwrap(), &z, h);
            let rel = diff_norm(&g, &fd) / linalg::norm(&fd).max(1e-12);
            assert!(rel <= 1e-6, "quadratic trial {trial}: rel {rel}");

            let z: Vec<f64> = (0..3).map(|_| 2.0 * rng::standard_normal(&mut r)).collect();
            let g = logistic.grad_neg_log_joint(&z).unwrap();
            let fd = central_diff(|p| logistic.neg_log_joint(p).unwrap(), &z, h);
            let rel = diff_norm(&g, &fd) / linalg::norm(&fd).max(1e-12);
            assert!(rel <= 1e-6, "logistic trial {trial}: rel {rel}");
        }
    }

    fn central_diff<F: Fn(&[f64]) -> f64>(f: F, z: &[f64], h: f64) -> Vec<f64> {
        let mut out = vec![0.0; z.len()];
        let mut p = z.to_vec();
        for i in 0..z.len() {
            p[i] = z[i] + h;
            let up = f(&p);
            p[i] = z[i] - h;
            let dn = f(&p);
            p[i] = z[i];
            out[i] = (up - dn) / (2.0 * h);
        }
        out
    }

    fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn optimal_params_examples() {
        // A = [[1,-2],[-2,5]] has inverse [[5,2],[2,1]] whose Cholesky
        // factor is [[sqrt(5), 0], [2/sqrt(5), 1/sqrt(5)]]
        let t = QuadraticTarget::new(example_matrix(), vec![0.0, 0.0], 0.0).unwrap();
        let config = FamilyConfig::cholesky(2, Conditioner::Identity);
        let p = t.optimal_params(&config).unwrap();
        assert!((p.s[0] - 2.23606797749979).abs() < 1e-10);
        assert!((p.lower[0] - 0.8944271909999159).abs() < 1e-10);
        assert!((p.s[1] - 0.4472135954999579).abs() < 1e-10);

        // |C* C*' A - I|_F <= 1e-10
        let c = crate::family::scale_matrix(&p, &config).unwrap();
        let prod = c.matmul(&c.transpose()).matmul(t.matrix());
        let mut dev_sq = 0.0_f64;
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                dev_sq += (prod.get(i, j) - want).powi(2);
            }
        }
        assert!(dev_sq.sqrt() <= 1e-10);

        // identity A with a shifted mean
        let t = QuadraticTarget::new(Matrix::identity(3), vec![3.0, 3.0, 3.0], 0.0).unwrap();
        let p = t.optimal_params(&FamilyConfig::cholesky(3, Conditioner::Identity)).unwrap();
        assert_eq!(p.m, vec![3.0, 3.0, 3.0]);
        assert_eq!(p.s, vec![1.0, 1.0, 1.0]);
        assert_eq!(p.lower, vec![0.0, 0.0, 0.0]);

        // scalar case: A = 4 gives C* = 0.5
        let t = QuadraticTarget::new(Matrix::from_rows(&[&[4.0]]).unwrap(), vec![0.0], 0.0).unwrap();
        let p = t.optimal_params(&FamilyConfig::cholesky(1, Conditioner::Identity)).unwrap();
        assert!((p.s[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn optimal_params_meanfield_rules() {
        let t = QuadraticTarget::new(example_matrix(), vec![0.0, 0.0], 0.0).unwrap();
        let mf = FamilyConfig::mean_field(2, Conditioner::Identity);
        assert!(matches!(
            t.optimal_params(&mf),
            Err(Error::UnsupportedConfiguration(_))
        ));

        let diag = QuadraticTarget::new(
            Matrix::from_rows(&[&[4.0, 0.0], &[0.0, 9.0]]).unwrap(),
            vec![1.0, 2.0],
            0.0,
        )
        .unwrap();
        let p = diag.optimal_params(&mf).unwrap();
        assert!((p.s[0] - 0.5).abs() < 1e-14);
        assert!((p.s[1] - 1.0 / 3.0).abs() < 1e-14);

        let softplus = FamilyConfig::cholesky(2, Conditioner::Softplus);
        assert!(t.optimal_params(&softplus).is_err());
    }

    #[test]
    fn eigen_extremes_cached() {
        let t = QuadraticTarget::new(example_matrix(), vec![0.0; 2], 0.0).unwrap();
        assert!((t.smoothness() - (3.0 + 2.0 * 2.0_f64.sqrt())).abs() < 1e-8);
        assert!((t.strong_convexity() - (3.0 - 2.0 * 2.0_f64.sqrt())).abs() < 1e-8);
        assert!((t.log_det() - 0.0).abs() < 1e-12); // det = 1
    }
}
