//! Integration domains, weight functions, and exact monomial moments.
//!
//! The moments computed here form the right-hand side of the exactness
//! system that the cubature constructions solve.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("point has dimension {got}, domain expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("weight function {weight:?} is not defined on the {domain:?}")]
    UnsupportedPair { domain: DomainKind, weight: WeightFunction },
}

/// The two supported domain shapes, both normalized to unit scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    /// The cube `[-1, 1]^q`.
    Cube,
    /// The closed unit ball `{ x : ||x||_2 <= 1 }`.
    Ball,
}

/// An integration domain: shape plus dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Domain {
    kind: DomainKind,
    dimension: usize,
}

impl Domain {
    pub fn new(kind: DomainKind, dimension: usize) -> Self {
        assert!(dimension >= 1, "domain dimension must be at least 1");
        Self { kind, dimension }
    }

    pub fn cube(dimension: usize) -> Self {
        Self::new(DomainKind::Cube, dimension)
    }

    pub fn ball(dimension: usize) -> Self {
        Self::new(DomainKind::Ball, dimension)
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Volume of the domain: `2^q` for the cube, `pi^(q/2) / Gamma(q/2 + 1)`
    /// for the ball.
    pub fn volume(&self) -> f64 {
        let q = self.dimension as f64;
        match self.kind {
            DomainKind::Cube => 2f64.powi(self.dimension as i32),
            DomainKind::Ball => (0.5 * q * PI.ln() - ln_gamma(0.5 * q + 1.0)).exp(),
        }
    }

    /// Membership test with inclusive boundary.
    pub fn contains(&self, x: &[f64]) -> Result<bool, DomainError> {
        if x.len() != self.dimension {
            return Err(DomainError::DimensionMismatch {
                expected: self.dimension,
                got: x.len(),
            });
        }
        Ok(match self.kind {
            DomainKind::Cube => x.iter().all(|v| v.abs() <= 1.0),
            DomainKind::Ball => x.iter().map(|v| v * v).sum::<f64>() <= 1.0,
        })
    }
}

/// Nonnegative weight functions paired with the domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFunction {
    /// `w(x) = 1` on either domain.
    Constant,
    /// `w(x) = prod_i sqrt(1 - x_i^2)` on the cube.
    Chebyshev2Product,
    /// `w(x) = sqrt(||x||_2)` on the ball.
    SqrtRadius,
}

impl WeightFunction {
    /// Whether this weight is defined on the given domain kind.
    pub fn supports(&self, kind: DomainKind) -> bool {
        match self {
            WeightFunction::Constant => true,
            WeightFunction::Chebyshev2Product => kind == DomainKind::Cube,
            WeightFunction::SqrtRadius => kind == DomainKind::Ball,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            WeightFunction::Constant => 1.0,
            WeightFunction::Chebyshev2Product => {
                x.iter().map(|v| (1.0 - v * v).max(0.0).sqrt()).product()
            }
            WeightFunction::SqrtRadius => {
                x.iter().map(|v| v * v).sum::<f64>().sqrt().sqrt()
            }
        }
    }
}

fn check_pair(domain: Domain, weight: WeightFunction) -> Result<(), DomainError> {
    if weight.supports(domain.kind()) {
        Ok(())
    } else {
        Err(DomainError::UnsupportedPair {
            domain: domain.kind(),
            weight,
        })
    }
}

/// A monomial exponent vector `(a_1, ..., a_q)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    exponents: Vec<u32>,
}

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        assert!(!exponents.is_empty(), "multi-index must have dimension >= 1");
        Self { exponents }
    }

    pub fn zero(dimension: usize) -> Self {
        Self::new(vec![0; dimension])
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn dimension(&self) -> usize {
        self.exponents.len()
    }

    pub fn total_degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    /// `x^a = prod_i x_i^(a_i)`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.exponents.len());
        self.exponents
            .iter()
            .zip(x)
            .map(|(&a, &v)| v.powi(a as i32))
            .product()
    }
}

/// 1-D moment on `[-1,1]` with `w = 1`: `0` for odd `k`, `2/(k+1)` otherwise.
fn cube_moment_constant(k: u32) -> f64 {
    if k % 2 == 1 {
        0.0
    } else {
        2.0 / (k as f64 + 1.0)
    }
}

/// 1-D moment on `[-1,1]` with `w = sqrt(1-x^2)`, by the recursion
/// `m_k = (k-1)/(k+2) * m_{k-2}` starting from `m_0 = pi/2`.
fn cube_moment_chebyshev(k: u32) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let mut m = PI / 2.0;
    let mut j = 2u32;
    while j <= k {
        m *= (j as f64 - 1.0) / (j as f64 + 2.0);
        j += 2;
    }
    m
}

/// Ball moment through log-gamma; `extra` is `0` for `w = 1` and `1/2` for
/// `w = sqrt(||x||)`. Zero whenever some exponent is odd.
fn ball_moment(exponents: &[u32], extra: f64) -> f64 {
    if exponents.iter().any(|&k| k % 2 == 1) {
        return 0.0;
    }
    let q = exponents.len() as f64;
    let total: u32 = exponents.iter().sum();
    let mut log_num = 0.0;
    let mut beta_sum = 0.0;
    for &k in exponents {
        let beta = 0.5 * (k as f64 + 1.0);
        log_num += ln_gamma(beta);
        beta_sum += beta;
    }
    let front = 2.0 / (total as f64 + q + extra);
    front * (log_num - ln_gamma(beta_sum)).exp()
}

/// Exact moment `I[x^k]` of a monomial for a supported (domain, weight) pair.
pub fn monomial_moment(
    domain: Domain,
    weight: WeightFunction,
    index: &MultiIndex,
) -> Result<f64, DomainError> {
    check_pair(domain, weight)?;
    if index.dimension() != domain.dimension() {
        return Err(DomainError::DimensionMismatch {
            expected: domain.dimension(),
            got: index.dimension(),
        });
    }
    let value = match (domain.kind(), weight) {
        (DomainKind::Cube, WeightFunction::Constant) => index
            .exponents()
            .iter()
            .map(|&k| cube_moment_constant(k))
            .product(),
        (DomainKind::Cube, WeightFunction::Chebyshev2Product) => index
            .exponents()
            .iter()
            .map(|&k| cube_moment_chebyshev(k))
            .product(),
        (DomainKind::Ball, WeightFunction::Constant) => ball_moment(index.exponents(), 0.0),
        (DomainKind::Ball, WeightFunction::SqrtRadius) => ball_moment(index.exponents(), 0.5),
        _ => unreachable!("pair validated above"),
    };
    Ok(value)
}

/// Memoized moment lookups for one (domain, weight) pair.
///
/// The Gram-Schmidt sweep re-requests the same monomial moments for every
/// degree it visits, so repeated lookups hit the cache.
#[derive(Debug)]
pub struct MomentCache {
    domain: Domain,
    weight: WeightFunction,
    memo: Mutex<HashMap<Vec<u32>, f64>>,
}

impl MomentCache {
    pub fn new(domain: Domain, weight: WeightFunction) -> Result<Self, DomainError> {
        check_pair(domain, weight)?;
        Ok(Self {
            domain,
            weight,
            memo: Mutex::new(HashMap::new()),
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn weight(&self) -> WeightFunction {
        self.weight
    }

    pub fn moment(&self, index: &MultiIndex) -> Result<f64, DomainError> {
        if let Some(&v) = self.memo.lock().unwrap().get(index.exponents()) {
            return Ok(v);
        }
        let v = monomial_moment(self.domain, self.weight, index)?;
        self.memo
            .lock()
            .unwrap()
            .insert(index.exponents().to_vec(), v);
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cube_volume_is_two_to_the_q() {
        assert_eq!(Domain::cube(2).volume(), 4.0);
        assert_eq!(Domain::cube(3).volume(), 8.0);
    }

    #[test]
    fn ball_volumes_match_gamma_formula() {
        assert_relative_eq!(Domain::ball(2).volume(), PI, max_relative = 1e-14);
        assert_relative_eq!(
            Domain::ball(3).volume(),
            4.0 * PI / 3.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn weight_eval_examples() {
        assert_eq!(WeightFunction::Constant.eval(&[0.3, -0.7]), 1.0);
        assert_eq!(WeightFunction::Chebyshev2Product.eval(&[0.0, 0.0]), 1.0);
        assert_relative_eq!(
            WeightFunction::SqrtRadius.eval(&[0.25, 0.0]),
            0.5,
            max_relative = 1e-15
        );
    }

    #[test]
    fn weights_are_nonnegative_on_their_domains() {
        // Includes the boundary, where 1 - x^2 can round slightly negative.
        for &x in &[-1.0, -0.999999, 0.0, 0.5, 1.0] {
            assert!(WeightFunction::Chebyshev2Product.eval(&[x, x]) >= 0.0);
        }
        assert!(WeightFunction::SqrtRadius.eval(&[0.0, 0.0]) >= 0.0);
    }

    #[test]
    fn weight_domain_pairing() {
        assert!(WeightFunction::Chebyshev2Product.supports(DomainKind::Cube));
        assert!(!WeightFunction::Chebyshev2Product.supports(DomainKind::Ball));
        assert!(!WeightFunction::SqrtRadius.supports(DomainKind::Cube));
        assert!(WeightFunction::Constant.supports(DomainKind::Ball));
        assert!(monomial_moment(
            Domain::ball(2),
            WeightFunction::Chebyshev2Product,
            &MultiIndex::zero(2)
        )
        .is_err());
    }

    #[test]
    fn contains_examples() {
        assert!(Domain::ball(2).contains(&[1.0, 0.0]).unwrap());
        assert!(!Domain::ball(2).contains(&[1.0, 1.0]).unwrap());
        assert!(Domain::cube(3).contains(&[0.0, 0.0, 0.0]).unwrap());
        assert!(matches!(
            Domain::cube(2).contains(&[0.0]),
            Err(DomainError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn moment_examples() {
        let m = |d, w, k: &[u32]| monomial_moment(d, w, &MultiIndex::new(k.to_vec())).unwrap();
        assert_relative_eq!(
            m(Domain::cube(1), WeightFunction::Constant, &[2]),
            2.0 / 3.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            m(Domain::cube(1), WeightFunction::Chebyshev2Product, &[2]),
            PI / 8.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            m(Domain::ball(2), WeightFunction::Constant, &[0, 0]),
            PI,
            max_relative = 1e-14
        );
        assert_eq!(m(Domain::ball(2), WeightFunction::Constant, &[1, 0]), 0.0);
    }

    #[test]
    fn zero_index_moment_equals_weighted_volume() {
        for (domain, weight) in [
            (Domain::cube(2), WeightFunction::Constant),
            (Domain::cube(3), WeightFunction::Constant),
            (Domain::ball(2), WeightFunction::Constant),
            (Domain::ball(3), WeightFunction::Constant),
        ] {
            let m = monomial_moment(domain, weight, &MultiIndex::zero(domain.dimension()))
                .unwrap();
            assert_relative_eq!(m, domain.volume(), max_relative = 1e-14);
        }
    }

    #[test]
    fn odd_component_moments_vanish_exactly() {
        for (domain, weight) in [
            (Domain::cube(2), WeightFunction::Constant),
            (Domain::cube(2), WeightFunction::Chebyshev2Product),
            (Domain::ball(3), WeightFunction::Constant),
            (Domain::ball(3), WeightFunction::SqrtRadius),
        ] {
            let q = domain.dimension();
            let mut k = vec![2u32; q];
            k[q - 1] = 3;
            assert_eq!(
                monomial_moment(domain, weight, &MultiIndex::new(k)).unwrap(),
                0.0
            );
        }
    }

    /// Composite 5-point Gauss-Legendre over one million panels; used as an
    /// independent check of the Chebyshev moment recursion. The substitution
    /// `x = sin t` removes the endpoint square-root singularity:
    /// `int x^k sqrt(1 - x^2) dx = int sin^k(t) cos^2(t) dt`.
    fn quadrature_oracle_chebyshev(k: u32) -> f64 {
        // 5-point Gauss-Legendre nodes/weights on [-1, 1].
        let a1 = (1.0f64 / 3.0 * (5.0 - 2.0 * (10.0f64 / 7.0).sqrt())).sqrt();
        let a2 = (1.0f64 / 3.0 * (5.0 + 2.0 * (10.0f64 / 7.0).sqrt())).sqrt();
        let nodes = [-a2, -a1, 0.0, a1, a2];
        let w1 = (322.0 + 13.0 * 70.0f64.sqrt()) / 900.0;
        let w2 = (322.0 - 13.0 * 70.0f64.sqrt()) / 900.0;
        let weights = [w2, w1, 128.0 / 225.0, w1, w2];

        let panels = 1_000_000usize;
        let h = PI / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let mid = -PI / 2.0 + (p as f64 + 0.5) * h;
            let mut local = 0.0;
            for (x, w) in nodes.iter().zip(weights) {
                let t: f64 = mid + 0.5 * h * x;
                local += w * t.sin().powi(k as i32) * t.cos().powi(2);
            }
            total += 0.5 * h * local;
        }
        total
    }

    #[test]
    fn chebyshev_recursion_matches_quadrature_oracle() {
        for k in (0..=40).step_by(4) {
            let exact = cube_moment_chebyshev(k);
            let approx = quadrature_oracle_chebyshev(k);
            assert_relative_eq!(exact, approx, max_relative = 1e-10);
        }
    }

    #[test]
    fn ball_moments_stay_finite_up_to_total_degree_sixty() {
        for q in [2usize, 3] {
            for total in (0..=60u32).step_by(10) {
                let mut k = vec![0u32; q];
                k[0] = total;
                let m = monomial_moment(
                    Domain::ball(q),
                    WeightFunction::Constant,
                    &MultiIndex::new(k),
                )
                .unwrap();
                assert!(m.is_finite() && m >= 0.0);
            }
        }
    }

    #[test]
    fn moment_cache_agrees_with_direct_computation() {
        let cache = MomentCache::new(Domain::ball(2), WeightFunction::SqrtRadius).unwrap();
        let k = MultiIndex::new(vec![4, 2]);
        let direct = monomial_moment(cache.domain(), cache.weight(), &k).unwrap();
        assert_eq!(cache.moment(&k).unwrap(), direct);
        // Second lookup served from the cache.
        assert_eq!(cache.moment(&k).unwrap(), direct);
    }
}
