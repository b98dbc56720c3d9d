//! Multi-trial comparisons: every method runs `trials` seeded solves, and
//! the logs are folded into quantile bands plus a JSON summary.

use std::path::{Path, PathBuf};

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cli::setup::{setup_method, theory_rate};
use crate::error::{Result, SketchError};
use crate::io::bands::quantile_bands;
use crate::io::config::{BandMetric, ExperimentConfig};
use crate::io::problem::{ProblemInstance, ProblemMetadata};
use crate::io::quantile_sorted;
use crate::probopt::OptConfig;
use crate::rates::{iteration_complexity, McOptions};
use crate::rng::child;
use crate::solver::{run_solver, ConvergenceLog, Outcome, SolveReport, SolverConfig};

/// Largest `n` for which the theoretical rate is computed without being asked.
const AUTO_THEORY_DIM: usize = 400;

#[derive(Clone, Debug)]
pub struct BenchOptions {
    pub out_dir: PathBuf,
    /// Write wall-clock seconds; off gives byte-stable output.
    pub with_timing: bool,
    /// Also write every trial's convergence log.
    pub keep_logs: bool,
    pub mc_samples: usize,
}

impl BenchOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        BenchOptions {
            out_dir: out_dir.into(),
            with_timing: true,
            keep_logs: false,
            mc_samples: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub label: String,
    pub method: String,
    pub problem: ProblemMetadata,
    pub trials: usize,
    pub converged: usize,
    /// Over converged trials.
    pub iterations_median: Option<f64>,
    pub iterations_mean: Option<f64>,
    pub iterations_max: Option<usize>,
    pub flops_median: Option<f64>,
    /// `ρ_c`, or the rate itself for non-discrete laws.
    pub rho_theory: Option<f64>,
    /// `⌈ln(1/tol)/(1 − ρ_c)⌉`
    pub predicted_iterations: Option<u64>,
    pub bands_file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub tolerance: f64,
    pub trials: usize,
    pub seed: u64,
    pub metric: BandMetric,
    pub quantiles: Vec<f64>,
    pub methods: Vec<MethodSummary>,
}

impl BenchSummary {
    pub fn all_converged(&self) -> bool {
        self.methods.iter().all(|m| m.converged == m.trials)
    }
}

/// Seed of trial `t` of method `j`, a function of the master seed only.
pub fn trial_seed(master: u64, method: usize, trial: usize) -> u64 {
    child(master, ((method as u64) << 32) | trial as u64).next_u64()
}

struct Prepared {
    problem: ProblemInstance,
    config: SolverConfig,
    rho_theory: Option<f64>,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| SketchError::io(path, e))
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn run_bench(cfg: &ExperimentConfig, opts: &BenchOptions) -> Result<BenchSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| SketchError::io(&opts.out_dir, e))?;

    let mut prepared = Vec::with_capacity(cfg.methods.len());
    for (j, spec) in cfg.methods.iter().enumerate() {
        let wrap = |e: SketchError| SketchError::Trial {
            method: spec.label(),
            trial: 0,
            source: Box::new(e),
        };
        let problem = cfg.problem.load(cfg.seed, Some(spec.method)).map_err(wrap)?;
        if cfg.metric != BandMetric::RelResidual && problem.xstar.is_none() {
            return Err(wrap(SketchError::InvalidParameter(format!(
                "metric {} needs a problem with a known solution",
                cfg.metric.name()
            ))));
        }
        let setup = setup_method(spec, &problem.system, &OptConfig::default()).map_err(wrap)?;
        let rho_theory = if cfg.overlay_theory || problem.metadata.n <= AUTO_THEORY_DIM {
            let mc = McOptions {
                samples: opts.mc_samples,
                seed: trial_seed(cfg.seed, j, usize::MAX >> 32),
            };
            match theory_rate(&setup.distribution, &problem.system, &setup.geometry, mc) {
                Ok(r) => Some(r),
                Err(e) if cfg.overlay_theory => return Err(wrap(e)),
                Err(_) => None,
            }
        } else {
            None
        };
        let mut config = SolverConfig::new(spec.method, setup.geometry, setup.distribution);
        config.tolerance = cfg.tolerance;
        config.max_iters = cfg.max_iters;
        config.max_seconds = cfg.max_seconds;
        config.log_stride = cfg.log_stride;
        prepared.push(Prepared {
            problem,
            config,
            rho_theory,
        });
    }

    let jobs: Vec<(usize, usize)> = (0..prepared.len())
        .flat_map(|j| (0..cfg.trials).map(move |t| (j, t)))
        .collect();
    let reports: Vec<SolveReport> = jobs
        .par_iter()
        .map(|&(j, t)| {
            let p = &prepared[j];
            let mut config = p.config.clone();
            config.seed = trial_seed(cfg.seed, j, t);
            run_solver(&p.problem.system, p.problem.xstar.as_deref(), &config).map_err(|e| SketchError::Trial {
                method: cfg.methods[j].label(),
                trial: t,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let mut summaries = Vec::with_capacity(prepared.len());
    for (j, (spec, p)) in cfg.methods.iter().zip(&prepared).enumerate() {
        let label = spec.label();
        let runs = &reports[j * cfg.trials..(j + 1) * cfg.trials];
        let mut logs: Vec<ConvergenceLog> = runs.iter().map(|r| r.log.clone()).collect();
        if opts.keep_logs {
            let dir = opts.out_dir.join(file_label(&label));
            std::fs::create_dir_all(&dir).map_err(|e| SketchError::io(&dir, e))?;
            for (t, log) in logs.iter().enumerate() {
                write_file(&dir.join(format!("trial-{t:04}.csv")), &log.to_csv(opts.with_timing))?;
            }
        }
        if logs.len() == 1 {
            logs.push(logs[0].clone());
        }
        let mut bands = quantile_bands(&logs, &cfg.quantiles, cfg.metric)?;
        if cfg.overlay_theory {
            let rho = p.rho_theory.expect("computed when the overlay is requested");
            let scale = if cfg.metric == BandMetric::EuclidError {
                bands.mean.first().copied().unwrap_or(1.0)
            } else {
                100.0
            };
            bands = bands.with_overlay(rho, scale);
        }
        let bands_file = format!("{}.bands.csv", file_label(&label));
        write_file(&opts.out_dir.join(&bands_file), &bands.to_csv())?;

        let mut iters: Vec<f64> = runs
            .iter()
            .filter(|r| r.outcome == Outcome::Converged)
            .map(|r| r.iterations as f64)
            .collect();
        let mut flops: Vec<f64> = runs
            .iter()
            .filter(|r| r.outcome == Outcome::Converged)
            .map(|r| r.log.last().map(|e| e.flops as f64).unwrap_or(0.0))
            .collect();
        iters.sort_by(f64::total_cmp);
        flops.sort_by(f64::total_cmp);
        let median = |v: &[f64]| (!v.is_empty()).then(|| quantile_sorted(v, 0.5));
        summaries.push(MethodSummary {
            label,
            method: spec.method.name().to_string(),
            problem: p.problem.metadata.clone(),
            trials: cfg.trials,
            converged: iters.len(),
            iterations_median: median(&iters),
            iterations_mean: (!iters.is_empty()).then(|| iters.iter().sum::<f64>() / iters.len() as f64),
            iterations_max: iters.last().map(|v| *v as usize),
            flops_median: median(&flops),
            rho_theory: p.rho_theory,
            predicted_iterations: p.rho_theory.and_then(|r| iteration_complexity(r, cfg.tolerance)),
            bands_file,
        });
    }
    let summary = BenchSummary {
        tolerance: cfg.tolerance,
        trials: cfg.trials,
        seed: cfg.seed,
        metric: cfg.metric,
        quantiles: cfg.quantiles.clone(),
        methods: summaries,
    };
    write_file(&opts.out_dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
