//! Experiment harness: point-count-versus-degree ratio fits, accuracy
//! sweeps with exact and noisy data, and l1 sparsity counts. Results are
//! emitted as CSV rows plus a JSON manifest echoing the full configuration.

use std::f64::consts::PI;
use std::sync::OnceLock;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::cubature::{
    add_noise, construct_l1, construct_ls, gauss_legendre_1d, mc_weights, product_gauss_legendre,
    CubatureError, CubatureFormula, Method,
};
use crate::domains::{Domain, DomainKind, WeightFunction};
use crate::pointsets::{
    equidistant_grid, format_f64, halton, restrict_to_ball, uniform_random, PointSet,
    PointSetError, PRNG_NAME,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("sweep must contain at least one point count")]
    EmptySweep,
    #[error("{n} is not a perfect {q}-th power, required for equidistant grids")]
    NotAPerfectPower { n: usize, q: usize },
    #[error("power-law fit needs at least two distinct degrees >= 1")]
    DegenerateFit,
    #[error(transparent)]
    Points(#[from] PointSetError),
    #[error(transparent)]
    Cubature(#[from] CubatureError),
}

/// The two benchmark integrands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestFunction {
    /// `f(x, y) = 1 / (1 + x^2 + y^2)` on the 2-D ball with the
    /// square-root-radius weight.
    TestA,
    /// `f(x, y, z) = arccos(x) arccos(y) arccos(z)` on the 3-D cube with the
    /// product Chebyshev weight.
    TestB,
}

impl TestFunction {
    pub fn id(&self) -> &'static str {
        match self {
            TestFunction::TestA => "testA",
            TestFunction::TestB => "testB",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "testA" | "testa" | "a" => Some(TestFunction::TestA),
            "testB" | "testb" | "b" => Some(TestFunction::TestB),
            _ => None,
        }
    }

    pub fn domain(&self) -> Domain {
        match self {
            TestFunction::TestA => Domain::ball(2),
            TestFunction::TestB => Domain::cube(3),
        }
    }

    pub fn weight(&self) -> WeightFunction {
        match self {
            TestFunction::TestA => WeightFunction::SqrtRadius,
            TestFunction::TestB => WeightFunction::Chebyshev2Product,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::TestA => 1.0 / (1.0 + x.iter().map(|v| v * v).sum::<f64>()),
            TestFunction::TestB => x.iter().map(|v| v.clamp(-1.0, 1.0).acos()).product(),
        }
    }

    /// The exact weighted integral `I[f]`.
    pub fn reference_integral(&self) -> f64 {
        match self {
            // In polar coordinates I = 2 pi * int_0^1 r^{3/2} / (1 + r^2) dr,
            // evaluated once by the adaptive radial oracle.
            TestFunction::TestA => {
                static VALUE: OnceLock<f64> = OnceLock::new();
                *VALUE.get_or_init(test_a_adaptive_reference)
            }
            // Each axis contributes int arccos(x) sqrt(1 - x^2) dx = pi^2/4.
            TestFunction::TestB => PI.powi(6) / 64.0,
        }
    }
}

/// Composite 10-point Gauss-Legendre quadrature over equal panels.
fn composite_gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let (nodes, weights) = RULE.get_or_init(|| gauss_legendre_1d(10));
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let mut local = 0.0;
        for (x, w) in nodes.iter().zip(weights) {
            local += w * f(mid + 0.5 * h * x);
        }
        total += 0.5 * h * local;
    }
    total
}

/// Radial oracle for the first test integrand at a fixed resolution.
/// `r = t^2` turns `int r^{3/2} / (1 + r^2) dr` into the smooth
/// `2 int t^4 / (1 + t^4) dt`.
pub(crate) fn test_a_radial_oracle(panels: usize) -> f64 {
    2.0 * PI * composite_gauss_legendre(|t| 2.0 * t.powi(4) / (1.0 + t.powi(4)), 0.0, 1.0, panels)
}

fn test_a_adaptive_reference() -> f64 {
    let mut panels = 4;
    let mut value = test_a_radial_oracle(panels);
    loop {
        panels *= 2;
        let refined = test_a_radial_oracle(panels);
        if (refined - value).abs() <= 1e-13 * (1.0 + refined.abs()) || panels >= 1 << 16 {
            return refined;
        }
        value = refined;
    }
}

/// The three point families of the sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Equidistant,
    Halton,
    Uniform { seed: u64 },
}

impl Family {
    pub fn label(&self) -> &'static str {
        match self {
            Family::Equidistant => "equidistant",
            Family::Halton => "halton",
            Family::Uniform { .. } => "uniform",
        }
    }
}

/// Generates `n` points of the family in the bounding cube, restricted to
/// the ball when the domain requires it (the retained count is then smaller
/// than `n`).
pub fn generate_points(
    family: Family,
    q: usize,
    n: usize,
    domain: Domain,
) -> Result<PointSet, ExperimentError> {
    let cube_points = match family {
        Family::Equidistant => {
            let axis = per_axis_count(n, q).ok_or(ExperimentError::NotAPerfectPower { n, q })?;
            equidistant_grid(q, axis)?
        }
        Family::Halton => halton(q, n)?,
        Family::Uniform { seed } => uniform_random(q, n, seed)?,
    };
    Ok(match domain.kind() {
        DomainKind::Cube => cube_points,
        DomainKind::Ball => restrict_to_ball(&cube_points)?,
    })
}

fn per_axis_count(n: usize, q: usize) -> Option<usize> {
    let guess = (n as f64).powf(1.0 / q as f64).round() as usize;
    for axis in guess.saturating_sub(1)..=guess + 1 {
        if axis >= 1 && axis.pow(q as u32) == n {
            return Some(axis);
        }
    }
    None
}

/// One sweep result row; `error` stays empty for experiments that measure
/// no integrand.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub n_points: usize,
    pub method: Method,
    pub degree: i32,
    pub basis_size: usize,
    pub kappa: f64,
    pub error: Option<f64>,
    pub nonzero_count: usize,
    pub wall_time_ms: u64,
}

impl SweepRow {
    fn from_formula(cf: &CubatureFormula, error: Option<f64>, elapsed_ms: u64) -> Self {
        Self {
            n_points: cf.points().len(),
            method: cf.method(),
            degree: cf.degree(),
            basis_size: cf.basis_size(),
            kappa: cf.kappa(),
            error,
            nonzero_count: cf.nonzero_count(),
            wall_time_ms: elapsed_ms,
        }
    }

    /// Row recorded when construction fails at some sweep entry; degree 0
    /// keeps it out of any fit.
    fn failed(n_points: usize, method: Method) -> Self {
        Self {
            n_points,
            method,
            degree: 0,
            basis_size: 0,
            kappa: f64::NAN,
            error: None,
            nonzero_count: 0,
            wall_time_ms: 0,
        }
    }
}

/// Full configuration echo, serialized into every manifest.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub kind: String,
    pub domain: DomainKind,
    pub q: usize,
    pub weight: WeightFunction,
    pub family: Family,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_function: Option<String>,
    pub sweep: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_seed: Option<u64>,
}

/// Sweep results plus the configuration that produced them.
#[derive(Debug, Clone)]
pub struct ExperimentRecord {
    pub config: ExperimentConfig,
    pub rows: Vec<SweepRow>,
}

impl ExperimentRecord {
    /// CSV with one row per (N, method). All reals use 17 significant
    /// digits; the wall-time column is the only nondeterministic field.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,method,d,K,kappa,error,nonzero_count,wall_time_ms\n");
        for row in &self.rows {
            let error = row.error.map(format_f64).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                row.n_points,
                row.method.as_str(),
                row.degree,
                row.basis_size,
                format_f64(row.kappa),
                error,
                row.nonzero_count,
                row.wall_time_ms
            ));
        }
        out
    }

    pub fn manifest_json(&self) -> String {
        #[derive(Serialize)]
        struct Manifest<'a> {
            config: &'a ExperimentConfig,
            prng: &'static str,
            version: &'static str,
        }
        serde_json::to_string_pretty(&Manifest {
            config: &self.config,
            prng: PRNG_NAME,
            version: env!("CARGO_PKG_VERSION"),
        })
        .expect("config serializes")
    }
}

/// Least-squares fit of `N ~ C d^s` in log-log space over the rows with
/// degree at least 1.
#[derive(Debug, Clone)]
pub struct RatioFit {
    pub samples: Vec<(usize, u32)>,
    pub c: f64,
    pub s: f64,
}

pub fn fit_power_law(samples: &[(usize, u32)]) -> Result<RatioFit, ExperimentError> {
    let kept: Vec<(usize, u32)> = samples.iter().filter(|(_, d)| *d >= 1).copied().collect();
    if kept.len() < 2 {
        return Err(ExperimentError::DegenerateFit);
    }
    let xs: Vec<f64> = kept.iter().map(|&(_, d)| (d as f64).ln()).collect();
    let ys: Vec<f64> = kept.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let x_mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let y_mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let var: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    if var == 0.0 {
        return Err(ExperimentError::DegenerateFit);
    }
    let cov: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    let s = cov / var;
    let c = (y_mean - s * x_mean).exp();
    Ok(RatioFit { samples: kept, c, s })
}

/// Sweeps the point count and records the achieved degree of exactness,
/// then fits `N ~ C d^s`.
pub fn ratio_experiment(
    domain: Domain,
    weight: WeightFunction,
    family: Family,
    method: Method,
    sweep: &[usize],
) -> Result<(RatioFit, ExperimentRecord), ExperimentError> {
    if sweep.is_empty() {
        return Err(ExperimentError::EmptySweep);
    }
    assert!(
        matches!(method, Method::Ls | Method::L1),
        "ratio sweeps are defined for the ls and l1 constructions"
    );
    let mut rows = Vec::new();
    for &n in sweep {
        match generate_points(family, domain.dimension(), n, domain) {
            Ok(points) => {
                let clock = Instant::now();
                let result = match method {
                    Method::Ls => construct_ls(&points, domain, weight),
                    Method::L1 => construct_ls(&points, domain, weight).and_then(|ls| {
                        construct_l1(
                            &points,
                            domain,
                            weight,
                            Some(ls.formula.degree() as u32),
                        )
                    }),
                    _ => unreachable!(),
                };
                let elapsed = clock.elapsed().as_millis() as u64;
                match result {
                    Ok(built) => rows.push(SweepRow::from_formula(&built.formula, None, elapsed)),
                    Err(_) => rows.push(SweepRow::failed(points.len(), method)),
                }
            }
            Err(_) => rows.push(SweepRow::failed(n, method)),
        }
    }
    let samples: Vec<(usize, u32)> = rows
        .iter()
        .filter(|r| r.degree >= 1)
        .map(|r| (r.n_points, r.degree as u32))
        .collect();
    let fit = fit_power_law(&samples)?;
    let record = ExperimentRecord {
        config: ExperimentConfig {
            kind: "ratio".into(),
            domain: domain.kind(),
            q: domain.dimension(),
            weight,
            family,
            method: Some(method),
            test_function: None,
            sweep: sweep.to_vec(),
            noise_epsilon: None,
            noise_seed: None,
        },
        rows,
    };
    Ok((fit, record))
}

/// Builds the LS, l1, and Monte Carlo formulas (plus the tensor
/// Gauss-Legendre baseline on the cube) for each sweep entry and records
/// `|C_N[f_eps] - I[f]|` against the reference integral.
pub fn accuracy_experiment(
    tf: TestFunction,
    family: Family,
    sweep: &[usize],
    noise_epsilon: f64,
    seed: u64,
) -> Result<ExperimentRecord, ExperimentError> {
    if sweep.is_empty() {
        return Err(ExperimentError::EmptySweep);
    }
    let domain = tf.domain();
    let weight = tf.weight();
    let q = domain.dimension();
    let reference = tf.reference_integral();
    let mut rows = Vec::new();

    for (i, &n) in sweep.iter().enumerate() {
        let row_seed = seed.wrapping_add(i as u64);
        let points = generate_points(family, q, n, domain)?;
        let values: Vec<f64> = points.iter().map(|p| tf.eval(p)).collect();
        let noisy = add_noise(&values, noise_epsilon, row_seed);

        let mut run = |cf: &CubatureFormula, elapsed: u64, data: &[f64]| {
            let error = (cf.apply(data).expect("lengths agree") - reference).abs();
            rows.push(SweepRow::from_formula(cf, Some(error), elapsed));
        };

        let clock = Instant::now();
        let ls = construct_ls(&points, domain, weight)?;
        run(
            &ls.formula,
            clock.elapsed().as_millis() as u64,
            &noisy.values,
        );

        let clock = Instant::now();
        let l1 = construct_l1(&points, domain, weight, Some(ls.formula.degree() as u32))?;
        run(
            &l1.formula,
            clock.elapsed().as_millis() as u64,
            &noisy.values,
        );

        let clock = Instant::now();
        let mc = mc_weights(&points, domain, weight)?;
        run(&mc, clock.elapsed().as_millis() as u64, &noisy.values);

        if domain.kind() == DomainKind::Cube {
            // The tensor rule integrates with unit weight, so it is applied
            // to f * w; its node count is the nearest per-axis match.
            let axis = (n as f64).powf(1.0 / q as f64).round().max(1.0) as usize;
            let clock = Instant::now();
            let gl = product_gauss_legendre(q, axis);
            let gl_values: Vec<f64> = gl
                .points()
                .iter()
                .map(|p| tf.eval(p) * weight.eval(p))
                .collect();
            let gl_noisy = add_noise(&gl_values, noise_epsilon, row_seed.wrapping_add(1 << 32));
            run(&gl, clock.elapsed().as_millis() as u64, &gl_noisy.values);
        }
    }

    Ok(ExperimentRecord {
        config: ExperimentConfig {
            kind: if noise_epsilon > 0.0 { "noise" } else { "accuracy" }.into(),
            domain: domain.kind(),
            q,
            weight,
            family,
            method: None,
            test_function: Some(tf.id().into()),
            sweep: sweep.to_vec(),
            noise_epsilon: Some(noise_epsilon),
            noise_seed: Some(seed),
        },
        rows,
    })
}

/// Records the basis size `K` and the nonzero-weight count of the l1
/// formula across a sweep.
pub fn sparsity_experiment(
    domain: Domain,
    weight: WeightFunction,
    family: Family,
    sweep: &[usize],
) -> Result<ExperimentRecord, ExperimentError> {
    if sweep.is_empty() {
        return Err(ExperimentError::EmptySweep);
    }
    let mut rows = Vec::new();
    for &n in sweep {
        let points = generate_points(family, domain.dimension(), n, domain)?;
        let clock = Instant::now();
        let ls = construct_ls(&points, domain, weight)?;
        let l1 = construct_l1(&points, domain, weight, Some(ls.formula.degree() as u32))?;
        let elapsed = clock.elapsed().as_millis() as u64;
        rows.push(SweepRow::from_formula(&l1.formula, None, elapsed));
    }
    Ok(ExperimentRecord {
        config: ExperimentConfig {
            kind: "sparsity".into(),
            domain: domain.kind(),
            q: domain.dimension(),
            weight,
            family,
            method: Some(Method::L1),
            test_function: None,
            sweep: sweep.to_vec(),
            noise_epsilon: None,
            noise_seed: None,
        },
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn test_b_reference_is_the_closed_form() {
        let reference = TestFunction::TestB.reference_integral();
        assert_relative_eq!(reference, PI.powi(6) / 64.0, max_relative = 1e-15);
        // Independent check of the per-axis factor pi^2/4 by quadrature;
        // x = cos(t) maps it to the smooth integral of t sin^2(t) over [0, pi].
        let axis = composite_gauss_legendre(|t| t * t.sin().powi(2), 0.0, PI, 20_000);
        assert_relative_eq!(axis, PI * PI / 4.0, max_relative = 1e-12);
        assert_relative_eq!(axis.powi(3), reference, max_relative = 1e-11);
    }

    #[test]
    fn test_a_reference_is_resolution_stable() {
        let coarse = test_a_radial_oracle(2_000);
        let fine = test_a_radial_oracle(4_000);
        assert_relative_eq!(coarse, fine, max_relative = 1e-12);
        assert_relative_eq!(
            TestFunction::TestA.reference_integral(),
            fine,
            max_relative = 1e-11
        );
    }

    #[test]
    fn quadrature_helper_is_linear() {
        let single = composite_gauss_legendre(|x| x * x + 0.5, 0.0, 1.0, 64);
        let doubled = composite_gauss_legendre(|x| 2.0 * (x * x + 0.5), 0.0, 1.0, 64);
        assert_relative_eq!(doubled, 2.0 * single, max_relative = 1e-14);
    }

    #[test]
    fn exact_power_law_is_recovered() {
        let samples: Vec<(usize, u32)> = (1..=10u32).map(|d| ((2 * d.pow(3)) as usize, d)).collect();
        let fit = fit_power_law(&samples).unwrap();
        assert_relative_eq!(fit.c, 2.0, max_relative = 1e-10);
        assert_relative_eq!(fit.s, 3.0, max_relative = 1e-10);
    }

    #[test]
    fn degenerate_fits_are_rejected() {
        assert!(matches!(
            fit_power_law(&[(10, 0), (20, 0)]),
            Err(ExperimentError::DegenerateFit)
        ));
        assert!(matches!(
            fit_power_law(&[(10, 2), (20, 2)]),
            Err(ExperimentError::DegenerateFit)
        ));
    }

    #[test]
    fn equidistant_family_requires_perfect_powers() {
        assert!(matches!(
            generate_points(Family::Equidistant, 2, 60, Domain::cube(2)),
            Err(ExperimentError::NotAPerfectPower { n: 60, q: 2 })
        ));
        let ps = generate_points(Family::Equidistant, 2, 64, Domain::cube(2)).unwrap();
        assert_eq!(ps.len(), 64);
        let ball = generate_points(Family::Equidistant, 2, 64, Domain::ball(2)).unwrap();
        assert!(ball.len() < 64);
    }

    #[test]
    fn ratio_experiment_produces_a_fit() {
        let (fit, record) = ratio_experiment(
            Domain::cube(2),
            WeightFunction::Constant,
            Family::Halton,
            Method::Ls,
            &[16, 64, 144],
        )
        .unwrap();
        assert_eq!(record.rows.len(), 3);
        assert!(record.rows.iter().all(|r| r.degree >= 1));
        assert!(fit.s > 0.0);
        let csv = record.to_csv();
        assert!(csv.starts_with("N,method,d,K,kappa,error,nonzero_count,wall_time_ms\n"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn sparsity_rows_are_basic_solutions() {
        let record = sparsity_experiment(
            Domain::cube(2),
            WeightFunction::Chebyshev2Product,
            Family::Halton,
            &[32, 64],
        )
        .unwrap();
        for row in &record.rows {
            assert!(row.nonzero_count <= row.basis_size);
        }
    }

    #[test]
    fn degree_zero_l1_has_a_single_nonzero_weight() {
        // Two points in 2-D cannot reach degree 1 (K = 3 > 2).
        let points = crate::pointsets::uniform_random(2, 2, 0).unwrap();
        let built = construct_l1(&points, Domain::cube(2), WeightFunction::Constant, None)
            .unwrap();
        assert_eq!(built.formula.degree(), 0);
        assert_eq!(built.formula.nonzero_count(), 1);
    }

    #[test]
    fn accuracy_rows_cover_all_methods() {
        let record = accuracy_experiment(
            TestFunction::TestB,
            Family::Equidistant,
            &[27, 64],
            0.0,
            0,
        )
        .unwrap();
        // ls, l1, mc, product_gauss per sweep entry on the cube.
        assert_eq!(record.rows.len(), 8);
        for row in &record.rows {
            let error = row.error.unwrap();
            assert!(error.is_finite());
            if row.method != Method::Mc {
                assert!(row.degree >= 0);
            }
        }
    }

    #[test]
    fn experiment_csv_is_deterministic_modulo_timing() {
        let run = || {
            sparsity_experiment(
                Domain::cube(2),
                WeightFunction::Constant,
                Family::Halton,
                &[32, 64],
            )
            .unwrap()
            .to_csv()
        };
        let strip_timing = |csv: &str| -> String {
            csv.lines()
                .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap())
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(strip_timing(&run()), strip_timing(&run()));
    }

    #[test]
    fn noisy_accuracy_floors_near_the_noise_level() {
        let record = accuracy_experiment(
            TestFunction::TestB,
            Family::Equidistant,
            &[64],
            1e-6,
            11,
        )
        .unwrap();
        for row in &record.rows {
            // Small sweep: errors dominated by truncation, never below eps^2.
            assert!(row.error.unwrap() > 1e-12);
        }
    }
}
