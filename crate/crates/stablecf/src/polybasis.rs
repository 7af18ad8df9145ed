//! Graded monomial bases, the discrete inner product, and discrete
//! orthonormal polynomials (DOPs) built by modified Gram-Schmidt with the
//! basis moments transformed in lockstep.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::domains::{Domain, DomainError, MultiIndex, WeightFunction};
use crate::pointsets::PointSet;

/// Relative breakdown tolerance for the Gram-Schmidt sweep: a deflated row
/// whose norm drops below this fraction of the original monomial norm
/// signals numerical rank deficiency.
pub const GS_BREAKDOWN_REL_TOL: f64 = 1e-12;

/// Gram residual above which one re-orthogonalization pass is applied.
pub const GS_REORTH_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("vector length {got} does not match expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("points have dimension {points}, basis expects {basis}")]
    DimensionMismatch { basis: usize, points: usize },
    #[error("discrete weights must be nonnegative (r[{index}] = {value})")]
    NegativeWeight { index: usize, value: f64 },
    #[error("no point carries positive discrete weight")]
    EmptySupport,
    #[error("Gram-Schmidt breakdown at basis element {index}: points are numerically rank-deficient, reduce the degree")]
    Breakdown { index: usize },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Number of monomials of total degree at most `d` in `q` variables,
/// `C(d + q, q)`.
pub fn basis_dimension(q: usize, d: u32) -> usize {
    let mut value: u128 = 1;
    for i in 1..=q as u128 {
        value = value * (d as u128 + i) / i;
    }
    value as usize
}

/// The monomials of total degree at most `d`, graded-lexicographically
/// ordered so the constant comes first.
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    dimension: usize,
    degree: u32,
    indices: Vec<MultiIndex>,
}

impl MonomialBasis {
    pub fn new(dimension: usize, degree: u32) -> Self {
        assert!(dimension >= 1);
        let mut indices = Vec::with_capacity(basis_dimension(dimension, degree));
        let mut scratch = vec![0u32; dimension];
        for total in 0..=degree {
            emit_of_degree(&mut scratch, 0, total, &mut indices);
        }
        Self {
            dimension,
            degree,
            indices,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn index(&self, k: usize) -> &MultiIndex {
        &self.indices[k]
    }
}

fn emit_of_degree(scratch: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == scratch.len() {
        scratch[pos] = remaining;
        out.push(MultiIndex::new(scratch.to_vec()));
        return;
    }
    for a in (0..=remaining).rev() {
        scratch[pos] = a;
        emit_of_degree(scratch, pos + 1, remaining - a, out);
    }
}

/// Evaluates every basis monomial at every point: entry `(k, n)` is
/// `x_n ^ alpha_k`.
pub fn eval_monomials(basis: &MonomialBasis, points: &PointSet) -> Result<DMatrix<f64>, BasisError> {
    if basis.dimension() != points.dimension() {
        return Err(BasisError::DimensionMismatch {
            basis: basis.dimension(),
            points: points.dimension(),
        });
    }
    Ok(DMatrix::from_fn(basis.len(), points.len(), |k, n| {
        basis.index(k).eval(points.point(n))
    }))
}

/// The discrete inner product `[u, v] = sum_n r_n u(x_n) v(x_n)` with
/// `r_n = w(x_n) |Omega| / N`.
#[derive(Debug, Clone)]
pub struct DiscreteInnerProduct {
    points: PointSet,
    r: Vec<f64>,
}

impl DiscreteInnerProduct {
    pub fn new(points: PointSet, r: Vec<f64>) -> Result<Self, BasisError> {
        if r.len() != points.len() {
            return Err(BasisError::LengthMismatch {
                expected: points.len(),
                got: r.len(),
            });
        }
        if let Some(index) = r.iter().position(|&v| v < 0.0 || !v.is_finite()) {
            return Err(BasisError::NegativeWeight {
                index,
                value: r[index],
            });
        }
        if r.iter().all(|&v| v == 0.0) {
            return Err(BasisError::EmptySupport);
        }
        Ok(Self { points, r })
    }

    /// Standard weights for a (domain, weight-function) pair.
    pub fn from_weight(
        points: PointSet,
        domain: Domain,
        weight: WeightFunction,
    ) -> Result<Self, BasisError> {
        if !weight.supports(domain.kind()) {
            return Err(DomainError::UnsupportedPair {
                domain: domain.kind(),
                weight,
            }
            .into());
        }
        let scale = domain.volume() / points.len() as f64;
        let r: Vec<f64> = points.iter().map(|p| weight.eval(p) * scale).collect();
        Self::new(points, r)
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    /// Indices of the support `X+` where `r_n > 0`.
    pub fn support(&self) -> Vec<usize> {
        (0..self.r.len()).filter(|&n| self.r[n] > 0.0).collect()
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> Result<f64, BasisError> {
        if u.len() != self.r.len() || v.len() != self.r.len() {
            return Err(BasisError::LengthMismatch {
                expected: self.r.len(),
                got: if u.len() != self.r.len() { u.len() } else { v.len() },
            });
        }
        Ok(self.dot(u, v))
    }

    fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        self.r
            .iter()
            .zip(u)
            .zip(v)
            .map(|((&r, &a), &b)| r * a * b)
            .sum()
    }
}

/// A discrete orthonormal polynomial basis: values at the data points, the
/// lower-triangular expansion in the graded monomials, and the transformed
/// moments `I[pi_k]`.
#[derive(Debug, Clone)]
pub struct DopBasis {
    basis: MonomialBasis,
    coeffs: DMatrix<f64>,
    values: DMatrix<f64>,
    moments: Vec<f64>,
    inner: DiscreteInnerProduct,
    gram_residual: f64,
}

impl DopBasis {
    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    /// `K x K` lower-triangular matrix: row `k` expands `pi_k` in the
    /// monomial basis.
    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    /// `K x N` matrix of `pi_k(x_n)`.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Transformed moments `I[pi_k]`.
    pub fn moments(&self) -> &[f64] {
        &self.moments
    }

    pub fn inner_product(&self) -> &DiscreteInnerProduct {
        &self.inner
    }

    /// Max-norm distance of the Gram matrix from the identity after the
    /// build (and any re-orthogonalization pass).
    pub fn gram_residual(&self) -> f64 {
        self.gram_residual
    }

    pub fn len(&self) -> usize {
        self.moments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moments.is_empty()
    }
}

/// One modified Gram-Schmidt sweep over the rows of `values`, updating the
/// monomial expansion and the moment vector in lockstep. `ref_norms` holds
/// the norms used by the relative breakdown test.
fn gs_sweep(
    values: &mut DMatrix<f64>,
    coeffs: &mut DMatrix<f64>,
    moments: &mut [f64],
    inner: &DiscreteInnerProduct,
    ref_norms: &[f64],
) -> Result<(), BasisError> {
    let k_total = values.nrows();
    for k in 0..k_total {
        for l in 0..k {
            let s = {
                let row_k = values.row(k);
                let row_l = values.row(l);
                inner
                    .r()
                    .iter()
                    .enumerate()
                    .map(|(n, &r)| r * row_k[n] * row_l[n])
                    .sum::<f64>()
            };
            for n in 0..values.ncols() {
                values[(k, n)] -= s * values[(l, n)];
            }
            for j in 0..=l {
                coeffs[(k, j)] -= s * coeffs[(l, j)];
            }
            moments[k] -= s * moments[l];
        }
        let norm_sq: f64 = {
            let row_k = values.row(k);
            inner
                .r()
                .iter()
                .enumerate()
                .map(|(n, &r)| r * row_k[n] * row_k[n])
                .sum()
        };
        let norm = norm_sq.max(0.0).sqrt();
        if norm <= GS_BREAKDOWN_REL_TOL * ref_norms[k] {
            return Err(BasisError::Breakdown { index: k });
        }
        for n in 0..values.ncols() {
            values[(k, n)] /= norm;
        }
        for j in 0..=k {
            coeffs[(k, j)] /= norm;
        }
        moments[k] /= norm;
    }
    Ok(())
}

fn gram_residual(values: &DMatrix<f64>, r: &[f64]) -> f64 {
    let weighted = {
        let mut w = values.clone();
        for n in 0..w.ncols() {
            let rn = r[n];
            for k in 0..w.nrows() {
                w[(k, n)] *= rn;
            }
        }
        w
    };
    let gram = &weighted * values.transpose();
    let k = gram.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// Builds the DOP basis by modified Gram-Schmidt. `monomial_moments[k]` must
/// be `I[e_k]` for the `k`-th basis monomial; the transformed moments
/// `I[pi_k]` come out of the same sweep.
///
/// The support of the inner product must be unisolvent for the basis degree
/// (checked upstream by the rank test); a breakdown error here means it is
/// not, numerically.
pub fn build_dop(
    basis: &MonomialBasis,
    inner: &DiscreteInnerProduct,
    monomial_moments: &[f64],
) -> Result<DopBasis, BasisError> {
    if monomial_moments.len() != basis.len() {
        return Err(BasisError::LengthMismatch {
            expected: basis.len(),
            got: monomial_moments.len(),
        });
    }
    let mut values = eval_monomials(basis, inner.points())?;
    let mut coeffs = DMatrix::identity(basis.len(), basis.len());
    let mut moments = monomial_moments.to_vec();

    let ref_norms: Vec<f64> = (0..basis.len())
        .map(|k| {
            let row = values.row(k);
            inner
                .r()
                .iter()
                .enumerate()
                .map(|(n, &r)| r * row[n] * row[n])
                .sum::<f64>()
                .max(0.0)
                .sqrt()
        })
        .collect();

    gs_sweep(&mut values, &mut coeffs, &mut moments, inner, &ref_norms)?;

    let mut residual = gram_residual(&values, inner.r());
    if residual > GS_REORTH_TOL {
        // Rows are near-orthonormal now, so reuse unit reference norms.
        let ones = vec![1.0; basis.len()];
        gs_sweep(&mut values, &mut coeffs, &mut moments, inner, &ones)?;
        residual = gram_residual(&values, inner.r());
    }

    Ok(DopBasis {
        basis: basis.clone(),
        coeffs,
        values,
        moments,
        inner: inner.clone(),
        gram_residual: residual,
    })
}
