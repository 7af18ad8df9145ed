//! Command-line frontend: point generation, cubature construction,
//! integration of value files, and the experiment sweeps, all with
//! reproducible seeded outputs.
//!
//! Exit codes: 0 on success, 2 for usage or input errors, 3 when a
//! construction fails on valid input (degenerate points, solver caps).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stablecf::cubature::{
    construct_at_degree, construct_l1, construct_ls, mc_weights, ConstructedCf, CubatureError,
    CubatureFormula, Method, SolverMeta,
};
use stablecf::domains::{Domain, WeightFunction};
use stablecf::experiments::{
    accuracy_experiment, ratio_experiment, sparsity_experiment, Family, RatioFit, TestFunction,
};
use stablecf::pointsets::{
    equidistant_grid, format_f64, halton, load_points, restrict_to_ball, save_points,
    uniform_random, PointSet,
};

#[derive(Parser)]
#[command(
    name = "stablecf",
    version,
    about = "Stable high-order cubature formulas on scattered data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a point family and write it as CSV (plus provenance sidecar).
    Points(PointsArgs),
    /// Construct a cubature formula over points loaded from CSV.
    Construct(ConstructArgs),
    /// Apply a stored formula to a file of function values.
    Integrate(IntegrateArgs),
    /// Run a sweep experiment and write its CSV and manifest.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Equid,
    Halton,
    Uniform,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DomainArg {
    Cube,
    Ball,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WeightArg {
    /// w = 1
    Const,
    /// Product of Chebyshev second-kind factors (cube only)
    Cheb2,
    /// sqrt of the radius (ball only)
    Sqrtr,
}

impl WeightArg {
    fn to_weight(self) -> WeightFunction {
        match self {
            WeightArg::Const => WeightFunction::Constant,
            WeightArg::Cheb2 => WeightFunction::Chebyshev2Product,
            WeightArg::Sqrtr => WeightFunction::SqrtRadius,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Ls,
    L1,
    Mc,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExperimentKind {
    Ratio,
    Accuracy,
    Noise,
    Sparsity,
}

#[derive(Args)]
struct PointsArgs {
    /// Point family to generate.
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Dimension of the points.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    q: u32,
    /// Grid resolution per axis (equidistant family).
    #[arg(long)]
    grid: Option<usize>,
    /// Number of points (halton and uniform families).
    #[arg(long)]
    n: Option<usize>,
    /// PRNG seed (uniform family).
    #[arg(long)]
    seed: Option<u64>,
    /// Keep only the points inside the unit ball.
    #[arg(long)]
    ball: bool,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConstructArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long, value_enum)]
    domain: DomainArg,
    #[arg(long, value_enum)]
    weight: WeightArg,
    /// Input points CSV.
    #[arg(long)]
    points: PathBuf,
    /// Output formula JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Seed the l1 search at this degree instead of the LS degree.
    #[arg(long)]
    start_degree: Option<u32>,
    /// Solve at exactly this degree; fails if the weights go negative.
    #[arg(long)]
    fixed_degree: Option<u32>,
}

#[derive(Args)]
struct IntegrateArgs {
    /// Formula JSON produced by `construct`.
    #[arg(long)]
    cf: PathBuf,
    /// CSV of function values, one per point.
    #[arg(long)]
    values: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    kind: ExperimentKind,
    #[arg(long, value_enum)]
    domain: Option<DomainArg>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    q: Option<u32>,
    #[arg(long, value_enum)]
    weight: Option<WeightArg>,
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    /// Seed for the uniform point family.
    #[arg(long)]
    family_seed: Option<u64>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Test integrand for accuracy and noise sweeps (testA or testB).
    #[arg(long)]
    test: Option<String>,
    /// Comma-separated point counts, e.g. "16,64,256".
    #[arg(long)]
    sweep: Option<String>,
    /// Noise half-width for the noise kind (default 1e-6).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Noise seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving the CSV and manifest.
    #[arg(long)]
    out_dir: PathBuf,
}

enum CliError {
    Input(String),
    Construction(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Construction(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(msg) | CliError::Construction(msg) => write!(f, "{msg}"),
        }
    }
}

fn input(err: impl fmt::Display) -> CliError {
    CliError::Input(err.to_string())
}

fn classify(err: CubatureError) -> CliError {
    match err {
        CubatureError::AllWeightsZero | CubatureError::Basis(_) | CubatureError::Solver(_) => {
            CliError::Construction(err.to_string())
        }
        other => CliError::Input(other.to_string()),
    }
}

fn classify_experiment(err: stablecf::experiments::ExperimentError) -> CliError {
    match err {
        stablecf::experiments::ExperimentError::Cubature(inner) => classify(inner),
        other => CliError::Input(other.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Points(args) => cmd_points(args),
        Command::Construct(args) => cmd_construct(args),
        Command::Integrate(args) => cmd_integrate(args),
        Command::Experiment(args) => cmd_experiment(args),
    }
}

fn cmd_points(args: PointsArgs) -> Result<(), CliError> {
    let q = args.q as usize;
    let points = match args.family {
        FamilyArg::Equid => {
            let n = args
                .grid
                .ok_or_else(|| input("--grid is required for the equidistant family"))?;
            equidistant_grid(q, n).map_err(input)?
        }
        FamilyArg::Halton => {
            let n = args
                .n
                .ok_or_else(|| input("--n is required for the halton family"))?;
            halton(q, n).map_err(input)?
        }
        FamilyArg::Uniform => {
            let n = args
                .n
                .ok_or_else(|| input("--n is required for the uniform family"))?;
            let seed = args
                .seed
                .ok_or_else(|| input("--seed is required for the uniform family"))?;
            uniform_random(q, n, seed).map_err(input)?
        }
    };
    let points = if args.ball {
        restrict_to_ball(&points).map_err(input)?
    } else {
        points
    };
    save_points(&points, &args.out).map_err(input)?;
    eprintln!("wrote {} points to {}", points.len(), args.out.display());
    Ok(())
}

/// Loads points and restricts them to the ball when the domain requires it,
/// mirroring how the experiment sweeps prepare their data.
fn load_for_domain(path: &Path, domain_kind: DomainArg) -> Result<(PointSet, usize), CliError> {
    let points = load_points(path).map_err(input)?;
    let requested = points.len();
    let points = match domain_kind {
        DomainArg::Cube => points,
        DomainArg::Ball => restrict_to_ball(&points).map_err(input)?,
    };
    Ok((points, requested))
}

fn cmd_construct(args: ConstructArgs) -> Result<(), CliError> {
    let (points, requested) = load_for_domain(&args.points, args.domain)?;
    if points.len() < requested {
        eprintln!(
            "note: {} of {} points lie outside the ball and were dropped",
            requested - points.len(),
            requested
        );
    }
    let domain = match args.domain {
        DomainArg::Cube => Domain::cube(points.dimension()),
        DomainArg::Ball => Domain::ball(points.dimension()),
    };
    let weight = args.weight.to_weight();

    let (formula, meta) = match (args.method, args.fixed_degree) {
        (MethodArg::Mc, None) => {
            let cf = mc_weights(&points, domain, weight).map_err(classify)?;
            (cf, SolverMeta::default())
        }
        (MethodArg::Mc, Some(_)) => {
            return Err(input("--fixed-degree does not apply to the mc method"))
        }
        (method_arg, Some(degree)) => {
            let method = if method_arg == MethodArg::Ls {
                Method::Ls
            } else {
                Method::L1
            };
            let built = construct_at_degree(&points, domain, weight, method, degree)
                .map_err(classify)?;
            summarize(&built);
            (
                built.formula,
                SolverMeta {
                    seed: None,
                    iterations: built.report.iterations,
                },
            )
        }
        (MethodArg::Ls, None) => {
            let built = construct_ls(&points, domain, weight).map_err(classify)?;
            summarize(&built);
            (
                built.formula,
                SolverMeta {
                    seed: None,
                    iterations: built.report.iterations,
                },
            )
        }
        (MethodArg::L1, None) => {
            let start = match args.start_degree {
                Some(d) => Some(d),
                None => {
                    // Seed the search with the LS degree, which the l1 rule
                    // always matches or exceeds.
                    let ls = construct_ls(&points, domain, weight).map_err(classify)?;
                    Some(ls.formula.degree() as u32)
                }
            };
            let built = construct_l1(&points, domain, weight, start).map_err(classify)?;
            summarize(&built);
            (
                built.formula,
                SolverMeta {
                    seed: None,
                    iterations: built.report.iterations,
                },
            )
        }
    };

    fs::write(&args.out, formula.to_json(&meta)).map_err(input)?;
    eprintln!(
        "wrote {} formula (d = {}, N = {}) to {}",
        formula.method().as_str(),
        formula.degree(),
        formula.points().len(),
        args.out.display()
    );
    Ok(())
}

fn summarize(built: &ConstructedCf) {
    eprintln!(
        "degree {} with K = {} basis functions, kappa = {}",
        built.formula.degree(),
        built.formula.basis_size(),
        format_f64(built.formula.kappa())
    );
}

fn load_values(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(input)?;
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let field = raw.trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(_) => {
                return Err(input(format!(
                    "line {line}: non-finite value '{field}' rejected"
                )))
            }
            Err(_) if values.is_empty() && line == 1 => continue, // header
            Err(_) => {
                return Err(input(format!(
                    "line {line}: cannot parse '{field}' as a number"
                )))
            }
        }
    }
    if values.is_empty() {
        return Err(input("values file contains no data"));
    }
    Ok(values)
}

fn cmd_integrate(args: IntegrateArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.cf).map_err(input)?;
    let (formula, _meta) = CubatureFormula::from_json(&text).map_err(input)?;
    let values = load_values(&args.values)?;
    if values.len() != formula.points().len() {
        return Err(input(format!(
            "values file has {} entries, formula has {} points",
            values.len(),
            formula.points().len()
        )));
    }
    let result = formula.apply(&values).map_err(input)?;
    println!("{}", format_f64(result));
    Ok(())
}

fn parse_sweep(text: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|_| input(format!("cannot parse sweep entry '{}'", tok.trim())))
        })
        .collect()
}

fn default_sweep(q: usize) -> Vec<usize> {
    match q {
        2 => (1..=10).map(|i| (4 * i) * (4 * i)).collect(),
        3 => (4..=12).map(|n| n * n * n).collect(),
        _ => vec![64, 256, 1024],
    }
}

fn family_from_args(args: &ExperimentArgs) -> Result<Family, CliError> {
    match args.family.unwrap_or(FamilyArg::Halton) {
        FamilyArg::Equid => Ok(Family::Equidistant),
        FamilyArg::Halton => Ok(Family::Halton),
        FamilyArg::Uniform => Ok(Family::Uniform {
            seed: args
                .family_seed
                .ok_or_else(|| input("--family-seed is required for the uniform family"))?,
        }),
    }
}

fn cmd_experiment(args: ExperimentArgs) -> Result<(), CliError> {
    fs::create_dir_all(&args.out_dir).map_err(input)?;
    let family = family_from_args(&args)?;

    let (name, csv, manifest) = match args.kind {
        ExperimentKind::Ratio | ExperimentKind::Sparsity => {
            let q = args.q.unwrap_or(2) as usize;
            let domain = match args.domain.unwrap_or(DomainArg::Cube) {
                DomainArg::Cube => Domain::cube(q),
                DomainArg::Ball => Domain::ball(q),
            };
            let weight = args.weight.unwrap_or(WeightArg::Const).to_weight();
            let sweep = match &args.sweep {
                Some(text) => parse_sweep(text)?,
                None => default_sweep(q),
            };
            if args.kind == ExperimentKind::Ratio {
                let method = match args.method.unwrap_or(MethodArg::Ls) {
                    MethodArg::Ls => Method::Ls,
                    MethodArg::L1 => Method::L1,
                    MethodArg::Mc => {
                        return Err(input("ratio sweeps are defined for ls and l1 only"))
                    }
                };
                let (fit, record) = ratio_experiment(domain, weight, family, method, &sweep)
                    .map_err(classify_experiment)?;
                let mut csv = record.to_csv();
                csv.push_str(&fit_row(&fit));
                println!("C = {} s = {}", format_f64(fit.c), format_f64(fit.s));
                ("ratio", csv, record.manifest_json())
            } else {
                let record = sparsity_experiment(domain, weight, family, &sweep)
                    .map_err(classify_experiment)?;
                ("sparsity", record.to_csv(), record.manifest_json())
            }
        }
        ExperimentKind::Accuracy | ExperimentKind::Noise => {
            let test = args
                .test
                .as_deref()
                .ok_or_else(|| input("--test is required (testA or testB)"))?;
            let tf = TestFunction::parse(test)
                .ok_or_else(|| input(format!("unknown test function '{test}'")))?;
            let epsilon = match args.kind {
                ExperimentKind::Noise => args.epsilon.unwrap_or(1e-6),
                _ => args.epsilon.unwrap_or(0.0),
            };
            if epsilon < 0.0 {
                return Err(input("--epsilon must be nonnegative"));
            }
            let sweep = match &args.sweep {
                Some(text) => parse_sweep(text)?,
                None => default_sweep(tf.domain().dimension()),
            };
            let record = accuracy_experiment(tf, family, &sweep, epsilon, args.seed)
                .map_err(classify_experiment)?;
            let name = if args.kind == ExperimentKind::Noise {
                "noise"
            } else {
                "accuracy"
            };
            (name, record.to_csv(), record.manifest_json())
        }
    };

    let csv_path = args.out_dir.join(format!("{name}.csv"));
    let manifest_path = args.out_dir.join(format!("{name}_manifest.json"));
    fs::write(&csv_path, csv).map_err(input)?;
    fs::write(&manifest_path, manifest).map_err(input)?;
    eprintln!("wrote {} and {}", csv_path.display(), manifest_path.display());
    Ok(())
}

fn fit_row(fit: &RatioFit) -> String {
    format!("# fit: C={} s={}\n", format_f64(fit.c), format_f64(fit.s))
}
