//! Small dense matrices.
//!
//! The problems this crate targets live in a handful of dimensions, so a
//! plain row-major `Vec<f64>` matrix with the few factorizations we need
//! (Cholesky, triangular solves, power iteration, QR orthonormalization)
//! keeps everything simple and bit-deterministic.

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::ContractViolation("empty matrix".into()));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Builds a square matrix from a row-major slice.
    pub fn from_row_major(n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        Ok(Matrix {
            rows: n,
            cols: n,
            data: data.to_vec(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += self.get(i, j) * x[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_asymmetry(&self) -> f64 {
        assert!(self.is_square());
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Quadratic form x' A x.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let ax = self.matvec(x);
        dot(x, &ax)
    }

    /// Trace of A * B' for same-shape matrices, i.e. the Frobenius inner
    /// product sum_ij A_ij B_ij.
    pub fn frobenius_inner(&self, other: &Matrix) -> f64 {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
///
/// Fails with `NumericFailure` when the matrix is not positive definite;
/// this is the SPD check used at target construction.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            got: a.cols(),
        });
    }
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a.get(i, j);
            for k in 0..j {
                acc -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if acc <= 0.0 || !acc.is_finite() {
                    return Err(Error::NumericFailure(format!(
                        "matrix is not positive definite (pivot {acc:e} at {i})"
                    )));
                }
                l.set(i, i, acc.sqrt());
            } else {
                l.set(i, j, acc / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solves L x = b with L lower triangular.
pub fn solve_lower(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    assert_eq!(b.len(), n);
    let mut x = vec![0.0; n];
    for i in 0..n {
        let mut acc = b[i];
        for j in 0..i {
            acc -= l.get(i, j) * x[j];
        }
        x[i] = acc / l.get(i, i);
    }
    x
}

/// Solves L' x = b with L lower triangular (back substitution on the
/// transpose).
pub fn solve_lower_transpose(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    assert_eq!(b.len(), n);
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = b[i];
        for j in (i + 1)..n {
            acc -= l.get(j, i) * x[j];
        }
        x[i] = acc / l.get(i, i);
    }
    x
}

/// Inverse of an SPD matrix given its lower Cholesky factor.
pub fn spd_inverse_from_chol(l: &Matrix) -> Matrix {
    let n = l.rows();
    let mut inv = Matrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let y = solve_lower(l, &e);
        let col = solve_lower_transpose(l, &y);
        for i in 0..n {
            inv.set(i, j, col[i]);
        }
        e[j] = 0.0;
    }
    // the solve introduces tiny asymmetry; restore it exactly
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (inv.get(i, j) + inv.get(j, i));
            inv.set(i, j, v);
            inv.set(j, i, v);
        }
    }
    inv
}

/// All eigenvalues of a symmetric matrix, ascending, by the cyclic Jacobi
/// method. The matrices in this crate stay small, so full sweeps to
/// machine precision are the cheapest reliable option; iterative methods
/// stagnate when the spectrum crowds its extremes.
pub fn sym_eigenvalues(a: &Matrix) -> Vec<f64> {
    assert!(a.is_square());
    let n = a.rows();
    if n == 1 {
        return vec![a.get(0, 0)];
    }
    let mut m = a.clone();
    let scale = a.data.iter().map(|v| v.abs()).fold(0.0_f64, f64::max).max(1e-300);
    for _sweep in 0..64 {
        let mut off = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(m.get(i, j).abs());
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() <= 1e-18 * scale {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    m.set(k, p, c * akp - s * akq);
                    m.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = m.get(p, k);
                    let aqk = m.get(q, k);
                    m.set(p, k, c * apk - s * aqk);
                    m.set(q, k, s * apk + c * aqk);
                }
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    eigs
}

/// Extreme eigenvalues (min, max) of a symmetric matrix.
pub fn sym_extreme_eigenvalues(a: &Matrix) -> (f64, f64) {
    let eigs = sym_eigenvalues(a);
    (eigs[0], eigs[eigs.len() - 1])
}

/// Largest eigenvalue of a symmetric positive-semidefinite matrix.
pub fn spd_lambda_max(a: &Matrix) -> f64 {
    sym_extreme_eigenvalues(a).1
}

/// Spectral norm (largest absolute eigenvalue) of a symmetric matrix.
pub fn sym_op_norm(a: &Matrix) -> f64 {
    let (lo, hi) = sym_extreme_eigenvalues(a);
    lo.abs().max(hi.abs())
}

/// A uniformly random orthogonal matrix: modified Gram-Schmidt applied to a
/// matrix of standard normal entries. Gram-Schmidt keeps the implied
/// triangular factor's diagonal positive, which makes the result
/// Haar-distributed.
pub fn random_orthogonal(n: usize, rng: &mut Stream) -> Matrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut c = vec![0.0; n];
        rng::fill_standard_normal(rng, &mut c);
        cols.push(c);
    }
    for j in 0..n {
        for k in 0..j {
            let proj = dot(&cols[j], &cols[k]);
            for i in 0..n {
                cols[j][i] -= proj * cols[k][i];
            }
        }
        let nj = norm(&cols[j]);
        for v in cols[j].iter_mut() {
            *v /= nj;
        }
    }
    let mut q = Matrix::zeros(n, n);
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            q.set(i, j, c[i]);
        }
    }
    q
}

/// Assembles Q diag(eigs) Q' so the result is exactly symmetric: entry
/// (i, j) and entry (j, i) are computed from the identical sequence of
/// floating-point operations.
pub fn sym_from_spectrum(q: &Matrix, eigs: &[f64]) -> Matrix {
    let n = q.rows();
    assert_eq!(eigs.len(), n);
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = 0.0;
            for (k, &e) in eigs.iter().enumerate() {
                acc += e * (q.get(i, k) * q.get(j, k));
            }
            a.set(i, j, acc);
            a.set(j, i, acc);
        }
    }
    a
}
