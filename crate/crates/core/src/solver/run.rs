use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SketchError};
use crate::linalg::dense::norm2;
use crate::linalg::Geometry;
use crate::rng::seeded;
use crate::sketch::SketchDistribution;
use crate::solver::state::{IterateState, Method};
use crate::solver::step::{general_step, specialized_step};
use crate::solver::system::LinearSystem;

pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// What the tolerance is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopMetric {
    /// `‖Ax − b‖ / ‖b‖`
    Residual,
    /// `‖Aᵀ(Ax − b)‖ / ‖Aᵀb‖`, meaningful on inconsistent systems too.
    NormalResidual,
    /// `‖x − x*‖_B / ‖x*‖_B`; needs a known solution.
    BNormError,
}

impl StopMetric {
    pub fn default_for(method: Method) -> Self {
        if method.is_least_squares() {
            StopMetric::NormalResidual
        } else {
            StopMetric::Residual
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub method: Method,
    pub geometry: Geometry,
    pub distribution: SketchDistribution,
    pub tolerance: f64,
    pub max_iters: usize,
    pub max_seconds: f64,
    pub seed: u64,
    /// `None` logs every iteration for `n ≤ 500` and every `⌈n/100⌉` beyond.
    pub log_stride: Option<usize>,
    pub stop: StopMetric,
}

impl SolverConfig {
    pub fn new(method: Method, geometry: Geometry, distribution: SketchDistribution) -> Self {
        SolverConfig {
            method,
            geometry,
            distribution,
            tolerance: 1e-4,
            max_iters: 1_000_000,
            max_seconds: 300.0,
            seed: 0,
            log_stride: None,
            stop: StopMetric::default_for(method),
        }
    }

    pub fn stride(&self, n: usize) -> usize {
        self.log_stride.unwrap_or_else(|| default_stride(n)).max(1)
    }

    fn validate(&self, sys: &LinearSystem) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(SketchError::InvalidParameter(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if !(self.max_seconds > 0.0) {
            return Err(SketchError::InvalidParameter("max_seconds must be positive".into()));
        }
        if self.geometry.dim() != sys.cols() {
            return Err(SketchError::dims("geometry", sys.cols(), self.geometry.dim()));
        }
        self.method.check_compatible(sys)
    }
}

pub fn default_stride(n: usize) -> usize {
    if n <= 500 {
        1
    } else {
        n.div_ceil(100)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iter: usize,
    pub rel_residual: f64,
    pub b_norm_error: Option<f64>,
    pub euclid_error: Option<f64>,
    pub seconds: f64,
    pub flops: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceLog {
    pub entries: Vec<LogEntry>,
}

pub const LOG_HEADER: &str = "iter,rel_residual,b_norm_error,euclid_error,seconds,flops";

impl ConvergenceLog {
    pub fn last(&self) -> Option<&LogEntry> {
        self.entries.last()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `seconds` is the only column that depends on the machine; pass
    /// `with_timing = false` to write zeros there for byte-stable output.
    pub fn to_csv(&self, with_timing: bool) -> String {
        let mut out = String::from(LOG_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &self.entries {
            let secs = if with_timing { e.seconds } else { 0.0 };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                e.iter,
                e.rel_residual,
                opt(e.b_norm_error),
                opt(e.euclid_error),
                secs,
                e.flops
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path, with_timing: bool) -> Result<()> {
        std::fs::write(path, self.to_csv(with_timing)).map_err(|e| SketchError::io(path, e))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| SketchError::Parse {
            path: "<log>".into(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == LOG_HEADER => {}
            _ => return Err(parse_err(1, format!("expected header '{LOG_HEADER}'"))),
        }
        let mut entries = Vec::new();
        for (no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(parse_err(no + 1, format!("expected 6 fields, got {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| parse_err(no + 1, format!("'{s}': {e}")));
            let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
            entries.push(LogEntry {
                iter: f[0].parse().map_err(|e| parse_err(no + 1, format!("iter: {e}")))?,
                rel_residual: num(f[1])?,
                b_norm_error: opt(f[2])?,
                euclid_error: opt(f[3])?,
                seconds: num(f[4])?,
                flops: f[5].parse().map_err(|e| parse_err(no + 1, format!("flops: {e}")))?,
            });
        }
        Ok(ConvergenceLog { entries })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Converged,
    MaxIterations,
    TimeBudget,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub outcome: Outcome,
    /// Final value of the stopping metric.
    pub final_metric: f64,
    pub log: ConvergenceLog,
}

struct Metrics<'a> {
    g: &'a Geometry,
    xstar: Option<&'a [f64]>,
    b_norm: f64,
    atb_norm: f64,
    xstar_b_norm: f64,
}

impl<'a> Metrics<'a> {
    fn new(sys: &'a LinearSystem, g: &'a Geometry, xstar: Option<&'a [f64]>, stop: StopMetric) -> Result<Self> {
        let xstar_b_norm = match xstar {
            Some(xs) => g.norm(xs)?,
            None => 0.0,
        };
        let atb_norm = if stop == StopMetric::NormalResidual {
            norm2(&sys.a().matvec_t(sys.b()))
        } else {
            0.0
        };
        Ok(Metrics {
            g,
            xstar,
            b_norm: sys.rhs_norm(),
            atb_norm,
            xstar_b_norm,
        })
    }

    fn relative(v: f64, scale: f64) -> f64 {
        if scale > 0.0 {
            v / scale
        } else {
            v
        }
    }

    fn errors(&self, x: &[f64]) -> Result<(Option<f64>, Option<f64>)> {
        match self.xstar {
            None => Ok((None, None)),
            Some(xs) => {
                let e: Vec<f64> = x.iter().zip(xs).map(|(u, v)| u - v).collect();
                let b = Self::relative(self.g.norm(&e)?, self.xstar_b_norm);
                Ok((Some(b), Some(norm2(&e))))
            }
        }
    }
}

/// Iterates from `x⁰ = 0` until the stopping metric drops below the
/// tolerance or a budget runs out.
///
/// The flops column counts the step kernels only, not the metric evaluations
/// done for logging.
pub fn run_solver(sys: &LinearSystem, xstar: Option<&[f64]>, config: &SolverConfig) -> Result<SolveReport> {
    config.validate(sys)?;
    if let Some(xs) = xstar {
        if xs.len() != sys.cols() {
            return Err(SketchError::dims("known solution", sys.cols(), xs.len()));
        }
    }
    if config.stop == StopMetric::BNormError && xstar.is_none() {
        return Err(SketchError::InvalidParameter("the B-norm stopping rule needs a known solution".into()));
    }
    let metrics = Metrics::new(sys, &config.geometry, xstar, config.stop)?;
    let stride = config.stride(sys.cols());
    let mut rng = seeded(config.seed);
    let mut state = IterateState::zeros(sys.cols());
    let start = Instant::now();
    let mut flops = 0u64;
    let mut log = ConvergenceLog::default();

    let record = |state: &mut IterateState, flops: u64, log: &mut ConvergenceLog| -> Result<f64> {
        let rel_residual = Metrics::relative(norm2(state.residual(sys)), metrics.b_norm);
        if !rel_residual.is_finite() || rel_residual > DIVERGENCE_LIMIT {
            return Err(SketchError::Diverged {
                iteration: state.k,
                residual: rel_residual,
            });
        }
        let (b_err, e_err) = metrics.errors(&state.x)?;
        let stop_value = match config.stop {
            StopMetric::Residual => rel_residual,
            StopMetric::NormalResidual => {
                let r = state.residual(sys).to_vec();
                Metrics::relative(norm2(&sys.a().matvec_t(&r)), metrics.atb_norm)
            }
            StopMetric::BNormError => b_err.unwrap_or(f64::INFINITY),
        };
        log.entries.push(LogEntry {
            iter: state.k,
            rel_residual,
            b_norm_error: b_err,
            euclid_error: e_err,
            seconds: start.elapsed().as_secs_f64(),
            flops,
        });
        Ok(stop_value)
    };

    let mut metric = record(&mut state, flops, &mut log)?;
    let mut outcome = if metric <= config.tolerance {
        Outcome::Converged
    } else {
        Outcome::MaxIterations
    };
    while outcome != Outcome::Converged && state.k < config.max_iters {
        let s = config.distribution.draw(&mut rng);
        flops += match config.method {
            Method::General => general_step(&mut state, &s, sys, &config.geometry)?,
            m => specialized_step(m, &mut state, &s, sys)?,
        };
        if state.k.is_multiple_of(stride) || state.k == config.max_iters {
            metric = record(&mut state, flops, &mut log)?;
            if metric <= config.tolerance {
                outcome = Outcome::Converged;
            } else if start.elapsed().as_secs_f64() > config.max_seconds {
                outcome = Outcome::TimeBudget;
                break;
            }
        }
    }
    Ok(SolveReport {
        iterations: state.k,
        x: state.x,
        outcome,
        final_metric: metric,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::sketch::{row_sketches, DiscreteSampling, Sketch};
    use crate::solver::presets::{preset, PresetOptions};

    fn identity_rk(tol: f64, seed: u64) -> (SolveReport, LinearSystem) {
        let sys = LinearSystem::new(DenseMatrix::identity(2), vec![1.0, 1.0]).unwrap();
        let dist = DiscreteSampling::uniform(row_sketches(2)).unwrap();
        let mut cfg = SolverConfig::new(Method::RK, Geometry::identity(2), dist.into());
        cfg.tolerance = tol;
        cfg.max_iters = 100;
        cfg.seed = seed;
        (run_solver(&sys, Some(&[1.0, 1.0]), &cfg).unwrap(), sys)
    }

    #[test]
    fn rk_on_identity_hits_both_rows() {
        for seed in 0..50 {
            let (rep, _) = identity_rk(1e-12, seed);
            assert_eq!(rep.outcome, Outcome::Converged);
            assert!(rep.iterations >= 2 && rep.iterations <= 100);
            assert_eq!(rep.log.len(), rep.iterations + 1);
            assert_eq!(rep.log.entries[0].rel_residual, 1.0);
        }
    }

    #[test]
    fn one_step_sampling_converges_immediately() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 1.0, 4.0]]);
        let xs = vec![1.0, 2.0, 3.0];
        let sys = LinearSystem::new(a.clone(), a.matvec(&xs)).unwrap();
        let dist = DiscreteSampling::uniform(vec![Sketch::Dense(DenseMatrix::identity(3))]).unwrap();
        let mut cfg = SolverConfig::new(Method::General, Geometry::identity(3), dist.into());
        cfg.tolerance = 1e-12;
        let rep = run_solver(&sys, Some(&xs), &cfg).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.final_metric <= 1e-12);
    }

    #[test]
    fn budget_exhaustion_and_determinism() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.99], vec![0.99, 1.0]]);
        let sys = LinearSystem::new(a, vec![1.0, 0.0]).unwrap();
        let (g, d) = preset(Method::RK, &sys, &PresetOptions::default()).unwrap();
        let mut cfg = SolverConfig::new(Method::RK, g, d);
        cfg.max_iters = 5;
        cfg.tolerance = 1e-14;
        let r1 = run_solver(&sys, None, &cfg).unwrap();
        let r2 = run_solver(&sys, None, &cfg).unwrap();
        assert_eq!(r1.outcome, Outcome::MaxIterations);
        assert_eq!(r1.x, r2.x);
        assert_eq!(r1.log.to_csv(false), r2.log.to_csv(false));
    }

    #[test]
    fn inconsistent_least_squares_stops_on_normal_residual() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let sys = LinearSystem::new(a, vec![1.0, 1.0, 0.0]).unwrap();
        let (g, d) = preset(Method::CDls, &sys, &PresetOptions::default()).unwrap();
        let mut cfg = SolverConfig::new(Method::CDls, g, d);
        cfg.tolerance = 1e-8;
        cfg.max_iters = 10_000;
        let rep = run_solver(&sys, None, &cfg).unwrap();
        assert_eq!(rep.outcome, Outcome::Converged);
        // least-squares solution is (1/3, 1/3); the plain residual stays away from zero
        assert!((rep.x[0] - 1.0 / 3.0).abs() < 1e-6 && (rep.x[1] - 1.0 / 3.0).abs() < 1e-6);
        assert!(rep.log.last().unwrap().rel_residual > 0.5);
    }

    #[test]
    fn stride_rule() {
        assert_eq!(default_stride(500), 1);
        assert_eq!(default_stride(501), 6);
        assert_eq!(default_stride(1000), 10);
    }

    #[test]
    fn csv_round_trip() {
        let (rep, _) = identity_rk(1e-12, 3);
        let text = rep.log.to_csv(true);
        assert!(text.starts_with(LOG_HEADER));
        let back = ConvergenceLog::from_csv(&text).unwrap();
        assert_eq!(back, rep.log);
        assert!(ConvergenceLog::from_csv("iter,x\n").is_err());
    }

    #[test]
    fn rejects_bad_config() {
        let sys = LinearSystem::new(DenseMatrix::identity(2), vec![1.0, 1.0]).unwrap();
        let dist = DiscreteSampling::uniform(row_sketches(2)).unwrap();
        let mut cfg = SolverConfig::new(Method::RK, Geometry::identity(2), dist.into());
        cfg.tolerance = 0.0;
        assert!(run_solver(&sys, None, &cfg).is_err());
        cfg.tolerance = 1e-4;
        cfg.stop = StopMetric::BNormError;
        assert!(run_solver(&sys, None, &cfg).is_err());
    }
}
