//! Thin helpers over `faer` for the dense symmetric algebra used throughout.

use faer::linalg::solvers::{Llt, Solve};
use faer::{Col, Mat, MatRef, Side};

use crate::error::{DspcaError, Result};

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted descending.
/// Column `j` of the returned matrix pairs with `values[j]`.
pub fn sym_eigen_desc(m: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| DspcaError::Eigen(format!("{e:?}")))?;
    let n = m.nrows();
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer returns ascending order.
    let values = (0..n).rev().map(|j| s[j]).collect();
    let vectors = Mat::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    Ok((values, vectors))
}

/// Flips the sign of `v` so its largest-magnitude coordinate is positive
/// (ties resolved toward the lowest index).
pub fn normalize_sign(v: &mut [f64]) {
    let mut best = 0usize;
    let mut best_abs = f64::NEG_INFINITY;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Replaces `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut Mat<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// `aᵀ a` for a tall or wide factor, symmetrized.
pub fn gram(a: MatRef<'_, f64>) -> Mat<f64> {
    let mut g = a.transpose() * a;
    symmetrize(&mut g);
    g
}

pub fn trace(m: MatRef<'_, f64>) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

pub fn frobenius(m: MatRef<'_, f64>) -> f64 {
    m.norm_l2()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn col_to_vec(c: &Col<f64>) -> Vec<f64> {
    (0..c.nrows()).map(|i| c[i]).collect()
}

pub fn vec_to_col(v: &[f64]) -> Col<f64> {
    Col::from_fn(v.len(), |i| v[i])
}

/// Cholesky factorization of a symmetric positive-definite matrix.
pub struct Cholesky {
    llt: Llt<f64>,
}

impl Cholesky {
    pub fn new(m: MatRef<'_, f64>) -> Result<Self> {
        m.llt(Side::Lower)
            .map(|llt| Cholesky { llt })
            .map_err(|e| DspcaError::NotPositiveDefinite(format!("{e:?}")))
    }

    pub fn dim(&self) -> usize {
        self.llt.L().nrows()
    }

    pub fn log_det(&self) -> f64 {
        let l = self.llt.L();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        let x = self.llt.solve(&rhs);
        (0..b.len()).map(|i| x[(i, 0)]).collect()
    }

    /// `bᵀ M⁻¹ b`, computed as `‖L⁻¹ b‖²`.
    pub fn quad_form_inv(&self, b: &[f64]) -> f64 {
        let l = self.llt.L();
        let n = b.len();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        y.iter().map(|v| v * v).sum()
    }

    pub fn lower(&self) -> MatRef<'_, f64> {
        self.llt.L()
    }
}
