//! Dense linear-algebra kernels: numerical rank (the unisolvency test),
//! weighted minimum-norm least squares, and equality-constrained l1
//! minimization.

mod simplex;

pub use simplex::{l1_minimize, L1Solution};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Gram residual below which a system is treated as already orthonormal and
/// the explicit weight formula applies.
pub const ORTHONORMAL_GRAM_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("coefficient matrix is numerically rank-deficient")]
    RankDeficient,
    #[error("equality constraints are infeasible")]
    Infeasible,
    #[error("simplex iteration cap of {0} exceeded")]
    IterationLimit(usize),
    #[error("no variable carries positive weight")]
    EmptySupport,
    #[error("vector length {got} does not match expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("solver lost feasibility beyond tolerance ({residual:e})")]
    LostFeasibility { residual: f64 },
}

/// Numerical rank report from a rank-revealing factorization.
#[derive(Debug, Clone)]
pub struct RankReport {
    pub rank: usize,
    /// Absolute diagonal of the pivoted R factor, nonincreasing.
    pub singular_or_pivot_values: Vec<f64>,
    pub tolerance_used: f64,
}

/// Numerical rank via column-pivoted QR. The tolerance is
/// `max(K, N) * eps * (largest pivot value)`.
pub fn rank_of(a: &DMatrix<f64>) -> RankReport {
    let (nrows, ncols) = a.shape();
    let qr = a.clone().col_piv_qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..nrows.min(ncols)).map(|i| r[(i, i)].abs()).collect();
    let largest = diag.first().copied().unwrap_or(0.0);
    let tolerance = nrows.max(ncols) as f64 * f64::EPSILON * largest;
    let rank = diag.iter().filter(|&&v| v > tolerance).count();
    RankReport {
        rank,
        singular_or_pivot_values: diag,
        tolerance_used: tolerance,
    }
}

/// Explicit weights for a system whose rows are orthonormal under the
/// discrete inner product: `w_n = r_n * sum_k P[k][n] m_k`.
pub fn ls_weights_from_orthonormal(p: &DMatrix<f64>, m: &[f64], r: &[f64]) -> Vec<f64> {
    let (k_total, n_total) = p.shape();
    assert_eq!(m.len(), k_total);
    assert_eq!(r.len(), n_total);
    (0..n_total)
        .map(|n| {
            let s: f64 = (0..k_total).map(|k| p[(k, n)] * m[k]).sum();
            r[n] * s
        })
        .collect()
}

/// Weighted minimum-norm solution of the underdetermined system `P w = m`:
/// the minimizer of `|| R^{-1/2} w ||_2` with `w` supported on `{ r_n > 0 }`.
///
/// When `P` already has orthonormal rows under the discrete inner product
/// (Gram matrix within `1e-10` of the identity) the explicit formula is
/// used. Otherwise the solution comes from a QR factorization of
/// `R^{1/2} P^T`; the normal matrix `P R P^T` is never inverted.
pub fn min_norm_weighted_ls(
    p: &DMatrix<f64>,
    m: &[f64],
    r: &[f64],
) -> Result<Vec<f64>, SolverError> {
    let (k_total, n_total) = p.shape();
    if m.len() != k_total {
        return Err(SolverError::LengthMismatch {
            expected: k_total,
            got: m.len(),
        });
    }
    if r.len() != n_total {
        return Err(SolverError::LengthMismatch {
            expected: n_total,
            got: r.len(),
        });
    }
    let support: Vec<usize> = (0..n_total).filter(|&n| r[n] > 0.0).collect();
    if support.is_empty() {
        return Err(SolverError::EmptySupport);
    }
    if support.len() < k_total {
        return Err(SolverError::RankDeficient);
    }

    let p_s = p.select_columns(&support);
    let r_s: Vec<f64> = support.iter().map(|&n| r[n]).collect();

    if gram_defect(&p_s, &r_s) <= ORTHONORMAL_GRAM_TOL {
        let w_s = ls_weights_from_orthonormal(&p_s, m, &r_s);
        return Ok(scatter(&w_s, &support, n_total));
    }

    // General path: with z = R^{-1/2} w the problem is the plain minimum-norm
    // solution of (P R^{1/2}) z = m, obtained from the thin QR of R^{1/2} P^T.
    let sqrt_r: Vec<f64> = r_s.iter().map(|v| v.sqrt()).collect();
    let mut b = p_s.transpose();
    for (i, &s) in sqrt_r.iter().enumerate() {
        for j in 0..k_total {
            b[(i, j)] *= s;
        }
    }
    let qr = b.qr();
    let r_factor = qr.r();
    let largest = r_factor
        .diagonal()
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = support.len().max(k_total) as f64 * f64::EPSILON * largest;
    if r_factor.diagonal().iter().any(|v| v.abs() <= tol) {
        return Err(SolverError::RankDeficient);
    }
    let rhs = DVector::from_column_slice(m);
    let y = r_factor
        .transpose()
        .solve_lower_triangular(&rhs)
        .ok_or(SolverError::RankDeficient)?;
    let z = qr.q() * y;
    let w_s: Vec<f64> = z.iter().zip(&sqrt_r).map(|(&zi, &s)| s * zi).collect();
    Ok(scatter(&w_s, &support, n_total))
}

fn gram_defect(p: &DMatrix<f64>, r: &[f64]) -> f64 {
    let mut weighted = p.clone();
    for (n, &rn) in r.iter().enumerate() {
        for k in 0..p.nrows() {
            weighted[(k, n)] *= rn;
        }
    }
    let gram = weighted * p.transpose();
    let mut worst: f64 = 0.0;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

fn scatter(w_s: &[f64], support: &[usize], n_total: usize) -> Vec<f64> {
    let mut w = vec![0.0; n_total];
    for (&n, &v) in support.iter().zip(w_s) {
        w[n] = v;
    }
    w
}
