//! The `sketchsolve` command line.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 budget exhausted,
//! 3 verification failure.

// Output goes through `say!` so a closed pipe (`| head`) is not a panic.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

pub mod bench;
pub mod setup;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::error::{Result, SketchError};
use crate::io::config::{DatasetFormulation, ExperimentConfig, MethodSpec, ProbChoice, ProblemSource};
use crate::io::generate::{GeneratorSpec, DEFAULT_RIDGE_LAMBDA};
use crate::io::mtx::{read_vector, write_vector};
use crate::io::problem::ProblemInstance;
use crate::probopt::{build_projectors, optimize_probabilities, OptConfig};
use crate::rates::{rate_report, rho_convenient, McOptions, MAX_ENUMERATED_SUBSETS};
use crate::sketch::SketchDistribution;
use crate::solver::{run_solver, BlockSize, GeometryChoice, Method, Outcome, SamplingKind, SolverConfig, StopMetric};
use crate::verify::{run_suite, Suite, SuiteOptions};

pub use bench::{run_bench, BenchOptions, BenchSummary, MethodSummary};
pub use setup::{check_overrides, setup_method, theory_rate, MethodSetup};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_BUDGET: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

/// Environment variable bounding the worker pool.
pub const THREADS_ENV: &str = "SKETCHSOLVE_THREADS";

/// Offset separating the problem's random stream from the solver's.
const PROBLEM_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Parser, Debug)]
#[command(name = "sketchsolve", version, about = "Sketch-and-project solvers for linear systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one solver and log its convergence.
    Solve(SolveArgs),
    /// Report the convergence rate of a method on a matrix.
    Rate(RateArgs),
    /// Optimize the sampling probabilities of a discrete sketch.
    OptimizeProbs(OptimizeArgs),
    /// Run a multi-trial comparison from a JSON config.
    Bench(BenchArgs),
    /// Run the invariant suites.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Formulation {
    /// Normal equations unless the method works on least squares directly.
    Auto,
    Raw,
    LeastSquares,
    Ridge,
}

#[derive(Args, Debug)]
pub struct ProblemArgs {
    /// Matrix Market file (.mtx) or LIBSVM data set (anything else).
    #[arg(long, conflicts_with = "generate")]
    pub matrix: Option<PathBuf>,
    /// Synthetic matrix, e.g. `uniform:200x50` or `sprandsym:100:0.1:0.01`.
    #[arg(long)]
    pub generate: Option<GeneratorSpec>,
    /// Right-hand side as a Matrix Market vector or plain numbers.
    #[arg(long, conflicts_with = "consistent_random")]
    pub rhs: Option<PathBuf>,
    /// `b = A·x*` with `x*` uniform on `[0,1]ⁿ`.
    #[arg(long)]
    pub consistent_random: bool,
    /// How a LIBSVM data set becomes a linear system.
    #[arg(long, value_enum, default_value = "auto")]
    pub formulation: Formulation,
    /// Ridge parameter for `--formulation ridge`.
    #[arg(long, default_value_t = DEFAULT_RIDGE_LAMBDA)]
    pub lambda: f64,
}

impl ProblemArgs {
    fn source(&self) -> Result<ProblemSource> {
        if let Some(g) = &self.generate {
            if self.rhs.is_some() {
                return Err(SketchError::InvalidParameter(
                    "--rhs cannot be combined with --generate".into(),
                ));
            }
            return Ok(ProblemSource::Generate {
                generator: g.clone(),
                seed: None,
            });
        }
        let Some(path) = &self.matrix else {
            return Err(SketchError::InvalidParameter(
                "one of --matrix or --generate is required".into(),
            ));
        };
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("mtx")) {
            return Ok(ProblemSource::MatrixMarket {
                path: path.clone(),
                rhs: self.rhs.clone(),
            });
        }
        if self.rhs.is_some() {
            return Err(SketchError::InvalidParameter(
                "LIBSVM data sets carry their labels; drop --rhs".into(),
            ));
        }
        let formulation = match self.formulation {
            Formulation::Auto => DatasetFormulation::Auto,
            Formulation::Raw => DatasetFormulation::Raw,
            Formulation::LeastSquares => DatasetFormulation::LeastSquares,
            Formulation::Ridge => DatasetFormulation::Ridge { lambda: self.lambda },
        };
        Ok(ProblemSource::Libsvm {
            path: path.clone(),
            formulation,
        })
    }

    fn load(&self, seed: u64, method: Method) -> Result<ProblemInstance> {
        self.source()?.load(seed.wrapping_add(PROBLEM_SEED_OFFSET), Some(method))
    }
}

#[derive(Args, Debug)]
pub struct MethodArgs {
    #[arg(long)]
    pub method: Method,
    /// Geometry `B` for `--method general`: identity, a, ata.
    #[arg(long)]
    pub b_geometry: Option<GeometryChoice>,
    /// Sketch family for `--method general`: rows, columns, blocks, gaussian, ...
    #[arg(long)]
    pub sampling: Option<SamplingKind>,
    /// uniform, convenient, optimized, or a file of probabilities.
    #[arg(long, default_value = "convenient")]
    pub probs: String,
    /// Block size for block methods: a number, `full` or `default`.
    #[arg(long, alias = "block", default_value = "default")]
    pub block_size: BlockSize,
    /// Draw each block as a fresh random subset.
    #[arg(long)]
    pub uniform_blocks: bool,
}

impl MethodArgs {
    fn spec(&self) -> Result<MethodSpec> {
        let probs = match self.probs.as_str() {
            "uniform" => ProbChoice::Uniform,
            "convenient" => ProbChoice::Convenient,
            "optimized" => ProbChoice::Optimized,
            path => ProbChoice::Explicit(read_vector(path)?),
        };
        let spec = MethodSpec {
            method: self.method,
            sampling: self.sampling.clone(),
            geometry: self.b_geometry,
            probs,
            block_size: self.block_size,
            uniform_blocks: self.uniform_blocks,
            label: None,
        };
        check_overrides(&spec)?;
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StopArg {
    Residual,
    NormalResidual,
    BNormError,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 300.0)]
    pub max_seconds: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Convergence log CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Log every k-th iteration.
    #[arg(long)]
    pub log_stride: Option<usize>,
    /// Stopping metric; least-squares methods default to the normal residual.
    #[arg(long, value_enum)]
    pub stop: Option<StopArg>,
    /// Leave the wall-clock column out of the log.
    #[arg(long)]
    pub no_timing: bool,
    /// Write the final iterate as a Matrix Market vector.
    #[arg(long)]
    pub solution: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RateArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Target accuracy for the iteration count.
    #[arg(long, default_value_t = 1e-4)]
    pub epsilon: f64,
    /// Monte Carlo samples for Gaussian sketches.
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    /// Certified optimality gap to stop at.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the JSON result here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the optimal probabilities as a vector, usable with `--probs`.
    #[arg(long)]
    pub probs_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for bands and the summary.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub max_seconds: Option<f64>,
    /// Add a theoretical `ρ^k` column to each band file.
    #[arg(long)]
    pub overlay_theory: bool,
    /// Leave the wall-clock column out of per-trial logs.
    #[arg(long)]
    pub no_timing: bool,
    /// Write every trial's convergence log.
    #[arg(long)]
    pub keep_logs: bool,
    /// Monte Carlo samples for Gaussian theory curves.
    #[arg(long, default_value_t = 20_000)]
    pub mc_samples: usize,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Suites to run (repeatable); all of them by default.
    #[arg(long = "suite")]
    pub suites: Vec<String>,
    /// Instances or trials per suite.
    #[arg(long)]
    pub instances: Option<usize>,
    /// Monte Carlo samples for the Gaussian suites.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", error_chain(&e));
            EXIT_INPUT
        }
    }
}

fn error_chain(e: &SketchError) -> String {
    // Trial errors already embed their source in the message.
    let mut msg = e.to_string();
    let mut cur: Option<&dyn std::error::Error> = std::error::Error::source(e);
    while let Some(s) = cur {
        let text = s.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
        cur = s.source();
    }
    msg
}

fn configure_threads() {
    let Ok(v) = std::env::var(THREADS_ENV) else { return };
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            // Fails only if a pool already exists, which keeps its size.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => eprintln!("warning: ignoring {THREADS_ENV}={v}"),
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Solve(a) => cmd_solve(&a),
        Command::Rate(a) => cmd_rate(&a),
        Command::OptimizeProbs(a) => cmd_optimize(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Verify(a) => cmd_verify(&a),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| SketchError::io(path, e))
}

fn outcome_name(o: Outcome) -> &'static str {
    match o {
        Outcome::Converged => "converged",
        Outcome::MaxIterations => "max-iterations",
        Outcome::TimeBudget => "time-budget",
    }
}

pub fn cmd_solve(args: &SolveArgs) -> Result<i32> {
    if args.problem.generate.is_none() && args.problem.rhs.is_none() && !args.problem.consistent_random {
        let libsvm = args
            .problem
            .matrix
            .as_ref()
            .is_some_and(|p| !p.extension().is_some_and(|e| e.eq_ignore_ascii_case("mtx")));
        if !libsvm {
            return Err(SketchError::InvalidParameter(
                "solve needs --rhs or --consistent-random".into(),
            ));
        }
    }
    let spec = args.method.spec()?;
    let problem = args.problem.load(args.seed, spec.method)?;
    let setup = setup_method(&spec, &problem.system, &OptConfig::default())?;
    let mut cfg = SolverConfig::new(spec.method, setup.geometry, setup.distribution);
    cfg.tolerance = args.tol;
    cfg.max_iters = args.max_iters;
    cfg.max_seconds = args.max_seconds;
    cfg.seed = args.seed;
    cfg.log_stride = args.log_stride;
    if let Some(s) = args.stop {
        cfg.stop = match s {
            StopArg::Residual => StopMetric::Residual,
            StopArg::NormalResidual => StopMetric::NormalResidual,
            StopArg::BNormError => StopMetric::BNormError,
        };
    }
    let report = run_solver(&problem.system, problem.xstar.as_deref(), &cfg)?;
    if let Some(out) = &args.out {
        report.log.write_csv(out, !args.no_timing)?;
    }
    if let Some(path) = &args.solution {
        write_vector(path, &report.x)?;
    }
    let residual = report.log.last().map(|e| e.rel_residual).unwrap_or(f64::NAN);
    say!("problem: {} ({}x{}, nnz {})", problem.metadata.name, problem.metadata.m, problem.metadata.n, problem.metadata.nnz);
    say!("method: {}", spec.method.name());
    say!("outcome: {}", outcome_name(report.outcome));
    say!("iterations: {}", report.iterations);
    say!("relative residual: {residual:.6e}");
    say!("stop metric: {:.6e}", report.final_metric);
    Ok(if report.outcome == Outcome::Converged { EXIT_OK } else { EXIT_BUDGET })
}

pub fn cmd_rate(args: &RateArgs) -> Result<i32> {
    let spec = args.method.spec()?;
    let problem = args.problem.load(args.seed, spec.method)?;
    let setup = setup_method(&spec, &problem.system, &OptConfig::default())?;
    let mc = match (&setup.distribution, args.mc_samples) {
        (SketchDistribution::Gaussian(_), None) => {
            return Err(SketchError::InvalidParameter(
                "Gaussian sketches need --mc-samples".into(),
            ))
        }
        (_, s) => s.map(|samples| McOptions {
            samples,
            seed: args.seed,
        }),
    };
    let mut report = rate_report(&setup.distribution, problem.a(), &setup.geometry, args.epsilon, mc)?;
    if let Some(opt) = &setup.optimization {
        report.rho_optimized = Some(opt.rho_star);
    }
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(out) = &args.out {
        write_text(out, &text)?;
    }
    say!("{text}");
    Ok(EXIT_OK)
}

pub fn cmd_optimize(args: &OptimizeArgs) -> Result<i32> {
    let mut spec = args.method.spec()?;
    spec.probs = ProbChoice::Convenient;
    let problem = args.problem.load(args.seed, spec.method)?;
    let setup = setup_method(&spec, &problem.system, &OptConfig::default())?;
    let discrete = match &setup.distribution {
        SketchDistribution::Discrete(d) => d.clone(),
        SketchDistribution::Subsets(s) => s.to_discrete(MAX_ENUMERATED_SUBSETS)?,
        SketchDistribution::Gaussian(_) => {
            return Err(SketchError::InvalidParameter(
                "probabilities can only be optimized for discrete samplings".into(),
            ))
        }
    };
    let bundle = build_projectors(discrete.samples(), problem.a(), &setup.geometry)?;
    let cfg = OptConfig {
        max_iters: args.max_iters,
        tol: args.tol,
    };
    let result = optimize_probabilities(&bundle, &cfg)?;
    let rho_c = rho_convenient(discrete.samples(), problem.a(), &setup.geometry)?;
    let rho_uniform = 1.0 - bundle.objective(&bundle.uniform())?;
    let out = json!({
        "p_star": result.p_star,
        "rho_star": result.rho_star,
        "rho_convenient": rho_c,
        "rho_uniform": rho_uniform,
        "iterations": result.iterations,
        "gap": result.certified_gap,
    });
    let text = serde_json::to_string_pretty(&out)?;
    if let Some(path) = &args.out {
        write_text(path, &text)?;
    }
    if let Some(path) = &args.probs_out {
        write_vector(path, &result.p_star)?;
    }
    say!("{text}");
    Ok(EXIT_OK)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<i32> {
    let mut cfg = ExperimentConfig::read(&args.config)?;
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.tol {
        cfg.tolerance = t;
    }
    if let Some(m) = args.max_iters {
        cfg.max_iters = m;
    }
    if let Some(s) = args.max_seconds {
        cfg.max_seconds = s;
    }
    cfg.overlay_theory |= args.overlay_theory;
    let opts = BenchOptions {
        out_dir: args.out.clone(),
        with_timing: !args.no_timing,
        keep_logs: args.keep_logs,
        mc_samples: args.mc_samples,
    };
    let summary = run_bench(&cfg, &opts)?;
    say!(
        "{:<16} {:>9} {:>12} {:>12} {:>10} {:>12}",
        "method", "converged", "iters(med)", "predicted", "rho", "flops(med)"
    );
    let fmt = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |x| format!("{x:.p$}"));
    for m in &summary.methods {
        say!(
            "{:<16} {:>9} {:>12} {:>12} {:>10} {:>12}",
            m.label,
            format!("{}/{}", m.converged, m.trials),
            fmt(m.iterations_median, 1),
            m.predicted_iterations.map_or("-".to_string(), |v| v.to_string()),
            fmt(m.rho_theory, 6),
            m.flops_median.map_or("-".to_string(), |v| format!("{v:.3e}")),
        );
    }
    Ok(if summary.all_converged() { EXIT_OK } else { EXIT_BUDGET })
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    let suites: Vec<Suite> = if args.suites.is_empty() || args.suites.iter().any(|s| s == "all") {
        Suite::ALL.to_vec()
    } else {
        args.suites.iter().map(|s| s.parse()).collect::<Result<_>>()?
    };
    let opts = SuiteOptions {
        instances: args.instances,
        samples: args.samples,
        seed: args.seed,
    };
    say!(
        "{:<22} {:>6} {:>8} {:>12} {:>10} {:>8}  statistic",
        "suite", "status", "cases", "worst", "tolerance", "seconds"
    );
    let mut first_failure = None;
    for suite in suites {
        let o = run_suite(suite, &opts)?;
        say!(
            "{:<22} {:>6} {:>8} {:>12.3e} {:>10.1e} {:>8.2}  {}",
            o.suite,
            if o.passed { "PASS" } else { "FAIL" },
            o.cases,
            o.worst,
            o.tolerance,
            o.seconds,
            o.statistic
        );
        if !o.passed && first_failure.is_none() {
            first_failure = Some(o);
        }
    }
    match first_failure {
        None => Ok(EXIT_OK),
        Some(o) => {
            let cx = json!({
                "suite": o.suite,
                "worst": o.worst,
                "tolerance": o.tolerance,
                "counterexample": o.counterexample,
            });
            say!("{}", serde_json::to_string_pretty(&cx)?);
            Ok(EXIT_VERIFY)
        }
    }
}
