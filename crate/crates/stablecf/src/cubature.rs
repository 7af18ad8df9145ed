//! Cubature formulas: the stability value, Monte Carlo and tensor
//! Gauss-Legendre baselines, and the ascending-degree search that produces
//! nonnegative least-squares and l1 rules.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domains::{Domain, DomainError, DomainKind, MomentCache, WeightFunction};
use crate::pointsets::{PointSet, PointSetError, Provenance};
use crate::polybasis::{
    basis_dimension, build_dop, eval_monomials, BasisError, DiscreteInnerProduct, DopBasis,
    MonomialBasis,
};
use crate::solvers::{
    l1_minimize, ls_weights_from_orthonormal, min_norm_weighted_ls, rank_of, SolverError,
    ORTHONORMAL_GRAM_TOL,
};

/// Weights more negative than `-NONNEGATIVITY_REL_TOL * I[1]` fail the
/// stability check; anything between that and zero is clamped to zero.
pub const NONNEGATIVITY_REL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum CubatureError {
    #[error("value vector has {got} entries, formula has {expected} points")]
    LengthMismatch { expected: usize, got: usize },
    #[error("point {index} lies outside the integration domain")]
    PointOutsideDomain { index: usize },
    #[error("points have dimension {points}, domain has dimension {domain}")]
    DimensionMismatch { domain: usize, points: usize },
    #[error("weight function vanishes at every data point")]
    AllWeightsZero,
    #[error("weights at the pinned degree are not nonnegative (min {min_weight:e})")]
    NegativeWeights { min_weight: f64 },
    #[error("stored weights ({weights}) do not match stored points ({points})")]
    CorruptRecord { points: usize, weights: usize },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Points(#[from] PointSetError),
    #[error("cannot parse cubature formula: {0}")]
    Json(#[from] serde_json::Error),
}

/// How a formula's weights were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ls,
    L1,
    Mc,
    ProductGauss,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ls => "ls",
            Method::L1 => "l1",
            Method::Mc => "mc",
            Method::ProductGauss => "product_gauss",
        }
    }
}

/// Stability value `kappa(w) = sum |w_n|`; it bounds how much data error the
/// formula can amplify.
pub fn kappa(weights: &[f64]) -> f64 {
    weights.iter().map(|w| w.abs()).sum()
}

/// An immutable cubature formula over a fixed point set.
#[derive(Debug, Clone)]
pub struct CubatureFormula {
    points: PointSet,
    weights: Vec<f64>,
    degree: i32,
    kappa: f64,
    method: Method,
    domain: Domain,
    weight_fn: WeightFunction,
}

impl CubatureFormula {
    fn new(
        points: PointSet,
        weights: Vec<f64>,
        degree: i32,
        method: Method,
        domain: Domain,
        weight_fn: WeightFunction,
    ) -> Self {
        assert_eq!(points.len(), weights.len());
        let kappa = kappa(&weights);
        Self {
            points,
            weights,
            degree,
            kappa,
            method,
            domain,
            weight_fn,
        }
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Degree of exactness; `-1` for Monte Carlo weights, which carry no
    /// exactness guarantee.
    pub fn degree(&self) -> i32 {
        self.degree
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn weight_fn(&self) -> WeightFunction {
        self.weight_fn
    }

    /// Number of basis polynomials integrated exactly, `C(d + q, q)`.
    pub fn basis_size(&self) -> usize {
        if self.degree < 0 {
            0
        } else {
            basis_dimension(self.domain.dimension(), self.degree as u32)
        }
    }

    pub fn nonzero_count(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }

    /// Applies the formula to function values at its points.
    pub fn apply(&self, values: &[f64]) -> Result<f64, CubatureError> {
        if values.len() != self.weights.len() {
            return Err(CubatureError::LengthMismatch {
                expected: self.weights.len(),
                got: values.len(),
            });
        }
        Ok(self.weights.iter().zip(values).map(|(w, f)| w * f).sum())
    }

    /// Evaluates a function at the formula's points and applies it.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p))
            .sum()
    }

    pub fn to_json(&self, meta: &SolverMeta) -> String {
        let record = CfRecord {
            method: self.method,
            domain: self.domain.kind(),
            weight: self.weight_fn,
            q: self.domain.dimension(),
            d: self.degree,
            k: self.basis_size(),
            n: self.points.len(),
            kappa: self.kappa,
            provenance: self.points.provenance().clone(),
            points: self.points.iter().map(|p| p.to_vec()).collect(),
            weights: self.weights.clone(),
            meta: meta.clone(),
        };
        serde_json::to_string_pretty(&record).expect("formula serializes")
    }

    pub fn from_json(text: &str) -> Result<(Self, SolverMeta), CubatureError> {
        let record: CfRecord = serde_json::from_str(text)?;
        if record.points.len() != record.weights.len() {
            return Err(CubatureError::CorruptRecord {
                points: record.points.len(),
                weights: record.weights.len(),
            });
        }
        let coords: Vec<f64> = record.points.iter().flatten().copied().collect();
        let points = PointSet::from_coords(coords, record.q, record.provenance)?;
        let domain = Domain::new(record.domain, record.q);
        Ok((
            Self::new(
                points,
                record.weights,
                record.d,
                record.method,
                domain,
                record.weight,
            ),
            record.meta,
        ))
    }
}

/// Solver details recorded alongside a serialized formula.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SolverMeta {
    pub seed: Option<u64>,
    pub iterations: usize,
}

#[derive(Serialize, Deserialize)]
struct CfRecord {
    method: Method,
    domain: DomainKind,
    weight: WeightFunction,
    q: usize,
    d: i32,
    k: usize,
    n: usize,
    kappa: f64,
    provenance: Provenance,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    meta: SolverMeta,
}

/// Function values with bounded uniform perturbation `|f - f_eps| <= epsilon`.
#[derive(Debug, Clone)]
pub struct NoisyData {
    pub values: Vec<f64>,
    pub epsilon: f64,
    pub seed: u64,
}

/// Adds i.i.d. uniform noise from `[-epsilon, epsilon]` with a seeded
/// generator; `epsilon = 0` returns the values untouched.
pub fn add_noise(values: &[f64], epsilon: f64, seed: u64) -> NoisyData {
    assert!(epsilon >= 0.0);
    let values = if epsilon == 0.0 {
        values.to_vec()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        values
            .iter()
            .map(|&v| v + rng.random_range(-epsilon..=epsilon))
            .collect()
    };
    NoisyData {
        values,
        epsilon,
        seed,
    }
}

fn validate_points(points: &PointSet, domain: Domain) -> Result<(), CubatureError> {
    if points.dimension() != domain.dimension() {
        return Err(CubatureError::DimensionMismatch {
            domain: domain.dimension(),
            points: points.dimension(),
        });
    }
    for (index, p) in points.iter().enumerate() {
        if !domain.contains(p)? {
            return Err(CubatureError::PointOutsideDomain { index });
        }
    }
    Ok(())
}

/// Monte Carlo weights `w_n = |Omega| w(x_n) / N`; no exactness guarantee,
/// recorded as degree -1.
pub fn mc_weights(
    points: &PointSet,
    domain: Domain,
    weight: WeightFunction,
) -> Result<CubatureFormula, CubatureError> {
    validate_points(points, domain)?;
    if !weight.supports(domain.kind()) {
        return Err(DomainError::UnsupportedPair {
            domain: domain.kind(),
            weight,
        }
        .into());
    }
    let scale = domain.volume() / points.len() as f64;
    let weights: Vec<f64> = points.iter().map(|p| weight.eval(p) * scale).collect();
    Ok(CubatureFormula::new(
        points.clone(),
        weights,
        -1,
        Method::Mc,
        domain,
        weight,
    ))
}

/// Legendre polynomial value and derivative by the three-term recurrence.
fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut dp0 = 0.0;
    let mut dp1 = 1.0;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        let dp2 = ((2.0 * kf - 1.0) * (p1 + x * dp1) - (kf - 1.0) * dp0) / kf;
        p0 = p1;
        p1 = p2;
        dp0 = dp1;
        dp1 = dp2;
    }
    (p1, dp1)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration from
/// the Chebyshev-angle initial guess; nodes are exactly symmetric.
pub fn gauss_legendre_1d(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = if 2 * i + 1 == n {
            0.0
        } else {
            (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos()
        };
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, z);
            let step = p / dp;
            z -= step;
            if step.abs() <= 1e-16 * (1.0 + z.abs()) {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, z);
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z.abs();
        nodes[n - 1 - i] = z.abs();
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Tensor-product Gauss-Legendre rule on the cube with `w = 1`; `n` nodes
/// per axis give `n^q` points and degree of exactness `2n - 1`.
pub fn product_gauss_legendre(q: usize, n: usize) -> CubatureFormula {
    assert!(q >= 1 && n >= 1);
    let (nodes, axis_weights) = gauss_legendre_1d(n);
    let total = n.pow(q as u32);
    let mut coords = Vec::with_capacity(total * q);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; q];
    for _ in 0..total {
        let mut w = 1.0;
        for &i in &idx {
            coords.push(nodes[i]);
            w *= axis_weights[i];
        }
        weights.push(w);
        for a in (0..q).rev() {
            idx[a] += 1;
            if idx[a] < n {
                break;
            }
            idx[a] = 0;
        }
    }
    let points = PointSet::from_coords(
        coords,
        q,
        Provenance::GaussLegendre { nodes_per_axis: n },
    )
    .expect("Gauss-Legendre nodes are distinct");
    CubatureFormula::new(
        points,
        weights,
        (2 * n - 1) as i32,
        Method::ProductGauss,
        Domain::cube(q),
        WeightFunction::Constant,
    )
}

/// Weights solved at one fixed degree, before any nonnegativity clamping.
#[derive(Debug)]
pub struct DegreeSolution {
    pub weights: Vec<f64>,
    pub degree: u32,
    pub basis_size: usize,
    pub min_weight: f64,
    pub iterations: usize,
    pub dop: DopBasis,
}

/// Why an attempted degree was rejected during the ascending search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttemptOutcome {
    Accepted,
    /// `C(d + q, q)` exceeds the number of positively weighted points.
    BasisExceedsPoints,
    /// The monomial matrix on the support lost rank: not unisolvent.
    RankDeficient,
    /// Gram-Schmidt broke down (numerical rank deficiency).
    GramSchmidtBreakdown,
    /// Some weight fell below the nonnegativity threshold.
    NegativeWeight,
}

#[derive(Debug, Clone, Copy)]
pub struct DegreeAttempt {
    pub degree: u32,
    pub basis_size: usize,
    pub outcome: AttemptOutcome,
}

/// Trace of the construction search.
#[derive(Debug, Clone, Default)]
pub struct ConstructionReport {
    pub attempts: Vec<DegreeAttempt>,
    /// Simplex iterations for the accepted degree (0 for least squares).
    pub iterations: usize,
    /// Gram residual of the accepted orthonormal basis.
    pub gram_residual: f64,
    /// Smallest weight of the accepted solution before clamping.
    pub min_weight: f64,
}

/// A constructed formula together with its basis and search trace.
#[derive(Debug)]
pub struct ConstructedCf {
    pub formula: CubatureFormula,
    pub dop: DopBasis,
    pub report: ConstructionReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SearchMethod {
    Ls,
    L1,
}

struct SearchState {
    inner: DiscreteInnerProduct,
    cache: MomentCache,
    support: Vec<usize>,
    volume_integral: f64,
}

impl SearchState {
    fn prepare(
        points: &PointSet,
        domain: Domain,
        weight: WeightFunction,
    ) -> Result<Self, CubatureError> {
        validate_points(points, domain)?;
        let inner = DiscreteInnerProduct::from_weight(points.clone(), domain, weight).map_err(
            |e| match e {
                BasisError::EmptySupport => CubatureError::AllWeightsZero,
                other => other.into(),
            },
        )?;
        let cache = MomentCache::new(domain, weight)?;
        let support = inner.support();
        let volume_integral = cache.moment(&crate::domains::MultiIndex::zero(
            domain.dimension(),
        ))?;
        Ok(Self {
            inner,
            cache,
            support,
            volume_integral,
        })
    }

    /// Solves the exactness system at one degree. `Rejected` covers the
    /// pre-solve gates (too few points, rank loss, breakdown); a solved
    /// system is always returned, negative weights included, and the caller
    /// applies the nonnegativity gate.
    fn attempt(
        &self,
        domain: Domain,
        degree: u32,
        method: SearchMethod,
    ) -> Result<Result<DegreeSolution, AttemptOutcome>, CubatureError> {
        let q = domain.dimension();
        let k_total = basis_dimension(q, degree);
        if k_total > self.support.len() {
            return Ok(Err(AttemptOutcome::BasisExceedsPoints));
        }
        let basis = MonomialBasis::new(q, degree);
        let monomial_values = eval_monomials(&basis, self.inner.points())?;
        let on_support = monomial_values.select_columns(&self.support);
        if rank_of(&on_support).rank < k_total {
            return Ok(Err(AttemptOutcome::RankDeficient));
        }
        let moments: Vec<f64> = basis
            .indices()
            .iter()
            .map(|k| self.cache.moment(k))
            .collect::<Result<_, _>>()?;
        let dop = match build_dop(&basis, &self.inner, &moments) {
            Ok(dop) => dop,
            Err(BasisError::Breakdown { .. }) => {
                return Ok(Err(AttemptOutcome::GramSchmidtBreakdown))
            }
            Err(other) => return Err(other.into()),
        };

        let (weights, iterations) = match method {
            SearchMethod::Ls => {
                let w = if dop.gram_residual() <= ORTHONORMAL_GRAM_TOL {
                    ls_weights_from_orthonormal(dop.values(), dop.moments(), self.inner.r())
                } else {
                    min_norm_weighted_ls(dop.values(), dop.moments(), self.inner.r())?
                };
                (w, 0)
            }
            SearchMethod::L1 => {
                let sub = dop.values().select_columns(&self.support);
                let solution = l1_minimize(&sub, dop.moments())?;
                let mut w = vec![0.0; self.inner.points().len()];
                for (&n, &v) in self.support.iter().zip(&solution.w) {
                    w[n] = v;
                }
                (w, solution.iterations)
            }
        };

        let min_weight = self
            .support
            .iter()
            .map(|&n| weights[n])
            .fold(f64::INFINITY, f64::min);
        Ok(Ok(DegreeSolution {
            weights,
            degree,
            basis_size: k_total,
            min_weight,
            iterations,
            dop,
        }))
    }

    fn passes_nonnegativity(&self, solution: &DegreeSolution) -> bool {
        solution.min_weight >= -NONNEGATIVITY_REL_TOL * self.volume_integral
    }
}

fn construct(
    points: &PointSet,
    domain: Domain,
    weight: WeightFunction,
    method: SearchMethod,
    start_degree: Option<u32>,
) -> Result<ConstructedCf, CubatureError> {
    let state = SearchState::prepare(points, domain, weight)?;
    let mut attempts = Vec::new();
    let try_degree = |attempts: &mut Vec<DegreeAttempt>,
                      d: u32|
     -> Result<Option<DegreeSolution>, CubatureError> {
        let (outcome, solution) = match state.attempt(domain, d, method)? {
            Ok(solution) if state.passes_nonnegativity(&solution) => {
                (AttemptOutcome::Accepted, Some(solution))
            }
            Ok(_) => (AttemptOutcome::NegativeWeight, None),
            Err(outcome) => (outcome, None),
        };
        attempts.push(DegreeAttempt {
            degree: d,
            basis_size: basis_dimension(domain.dimension(), d),
            outcome,
        });
        Ok(solution)
    };

    // Establish a feasible base degree. Degree 0 always passes: its unique
    // least-squares weights are w_n = w(x_n) I[1] / sum w(x_m), and the l1
    // program then has a single-weight basic optimum.
    let mut start = start_degree.unwrap_or(0);
    let mut accepted = loop {
        match try_degree(&mut attempts, start)? {
            Some(solution) => break solution,
            None => {
                assert!(start > 0, "degree 0 construction cannot fail");
                start -= 1;
            }
        }
    };

    // Ascend until the first failure, keeping the last accepted degree.
    while let Some(solution) = try_degree(&mut attempts, accepted.degree + 1)? {
        accepted = solution;
    }

    let report = ConstructionReport {
        attempts,
        iterations: accepted.iterations,
        gram_residual: accepted.dop.gram_residual(),
        min_weight: accepted.min_weight,
    };
    let weights: Vec<f64> = accepted
        .weights
        .iter()
        .map(|&w| if w < 0.0 { 0.0 } else { w })
        .collect();
    let formula = CubatureFormula::new(
        points.clone(),
        weights,
        accepted.degree as i32,
        match method {
            SearchMethod::Ls => Method::Ls,
            SearchMethod::L1 => Method::L1,
        },
        domain,
        weight,
    );
    Ok(ConstructedCf {
        formula,
        dop: accepted.dop,
        report,
    })
}

/// Constructs the least-squares cubature formula: the highest degree whose
/// weighted minimum-norm weights stay nonnegative.
pub fn construct_ls(
    points: &PointSet,
    domain: Domain,
    weight: WeightFunction,
) -> Result<ConstructedCf, CubatureError> {
    construct(points, domain, weight, SearchMethod::Ls, None)
}

/// Constructs the l1-minimal cubature formula. `start_degree` seeds the
/// search (typically the degree of the least-squares formula on the same
/// points, which the l1 rule always matches or exceeds).
pub fn construct_l1(
    points: &PointSet,
    domain: Domain,
    weight: WeightFunction,
    start_degree: Option<u32>,
) -> Result<ConstructedCf, CubatureError> {
    construct(points, domain, weight, SearchMethod::L1, start_degree)
}

/// Solves for weights at one pinned degree without the ascending search;
/// the result may contain negative weights.
pub fn weights_at_degree(
    points: &PointSet,
    domain: Domain,
    weight: WeightFunction,
    method: Method,
    degree: u32,
) -> Result<DegreeSolution, CubatureError> {
    let search = match method {
        Method::Ls => SearchMethod::Ls,
        Method::L1 => SearchMethod::L1,
        _ => panic!("fixed-degree weights exist only for the ls and l1 methods"),
    };
    let state = SearchState::prepare(points, domain, weight)?;
    match state.attempt(domain, degree, search)? {
        Ok(solution) => Ok(solution),
        Err(AttemptOutcome::GramSchmidtBreakdown) => {
            Err(BasisError::Breakdown { index: 0 }.into())
        }
        Err(_) => Err(SolverError::RankDeficient.into()),
    }
}

/// Builds a formula at exactly one degree, with the same nonnegativity gate
/// and clamping as the ascending search; fails if any weight drops below the
/// stability threshold.
pub fn construct_at_degree(
    points: &PointSet,
    domain: Domain,
    weight: WeightFunction,
    method: Method,
    degree: u32,
) -> Result<ConstructedCf, CubatureError> {
    let search = match method {
        Method::Ls => SearchMethod::Ls,
        Method::L1 => SearchMethod::L1,
        _ => panic!("fixed-degree construction exists only for the ls and l1 methods"),
    };
    let state = SearchState::prepare(points, domain, weight)?;
    let solution = match state.attempt(domain, degree, search)? {
        Ok(solution) => solution,
        Err(AttemptOutcome::GramSchmidtBreakdown) => {
            return Err(BasisError::Breakdown { index: 0 }.into())
        }
        Err(_) => return Err(SolverError::RankDeficient.into()),
    };
    if !state.passes_nonnegativity(&solution) {
        return Err(CubatureError::NegativeWeights {
            min_weight: solution.min_weight,
        });
    }
    let report = ConstructionReport {
        attempts: vec![DegreeAttempt {
            degree,
            basis_size: solution.basis_size,
            outcome: AttemptOutcome::Accepted,
        }],
        iterations: solution.iterations,
        gram_residual: solution.dop.gram_residual(),
        min_weight: solution.min_weight,
    };
    let weights: Vec<f64> = solution
        .weights
        .iter()
        .map(|&w| if w < 0.0 { 0.0 } else { w })
        .collect();
    let formula = CubatureFormula::new(
        points.clone(),
        weights,
        degree as i32,
        method,
        domain,
        weight,
    );
    Ok(ConstructedCf {
        formula,
        dop: solution.dop,
        report,
    })
}

/// Largest relative exactness violation of a formula over all monomials of
/// total degree at most its degree of exactness.
pub fn max_exactness_violation(cf: &CubatureFormula) -> Result<f64, CubatureError> {
    if cf.degree() < 0 {
        return Ok(0.0);
    }
    let basis = MonomialBasis::new(cf.domain().dimension(), cf.degree() as u32);
    let cache = MomentCache::new(cf.domain(), cf.weight_fn())?;
    let values = eval_monomials(&basis, cf.points())?;
    let mut worst: f64 = 0.0;
    for (k, index) in basis.indices().iter().enumerate() {
        let exact = cache.moment(index)?;
        let row: Vec<f64> = values.row(k).iter().copied().collect();
        let achieved = cf.apply(&row)?;
        worst = worst.max((achieved - exact).abs() / (1.0 + exact.abs()));
    }
    Ok(worst)
}
