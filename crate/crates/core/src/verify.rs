//! Self-checking property suites run by `sketchsolve verify` and by the
//! acceptance target. Each suite draws its instances from a seeded stream
//! and reports the worst value of its test statistic against a tolerance.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Result, SketchError};
use crate::linalg::dense::{norm2, sub};
use crate::linalg::{lambda_extreme, DenseMatrix, Geometry};
use crate::rates::{
    expected_gaussian_block_projection_mc, expected_gaussian_projection_2d, expected_gaussian_projection_mc,
    expected_z_discrete, fixed_point_trajectory, rho_exact, variance_decomposition,
};
use crate::rng::{child, gaussian_matrix, gaussian_vec, seeded, uniform_vec, SketchRng};
use crate::sketch::{convenient_probabilities, row_sketches, DiscreteSampling, Sketch};
use crate::solver::presets::method_defaults;
use crate::solver::{
    build_geometry, general_step, project_sketch_oracle, projection_matrix, specialized_step, IterateState,
    LinearSystem, Method,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    /// General step, direct oracle and dedicated kernel agree.
    Equivalence,
    /// `B⁻¹Z` is a `B`-orthogonal projector.
    Projection,
    /// Monte Carlo `E[ξξᵀ/ξᵀξ]` against the closed form in two dimensions.
    Gaussian2d,
    /// Monte Carlo `E[ξξᵀ/ξᵀξ] ⪰ (2/π)Ω/Tr(Ω)`.
    GaussianLowerBound,
    /// Empirical mean error against the fixed-point trajectory.
    Trajectory,
    /// Mean squared `B`-norm error against `ρ^k`.
    NormDecay,
    /// Bias-variance identity on stored ensembles.
    Decomposition,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Equivalence,
        Suite::Projection,
        Suite::Gaussian2d,
        Suite::GaussianLowerBound,
        Suite::Trajectory,
        Suite::NormDecay,
        Suite::Decomposition,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Equivalence => "equivalence",
            Suite::Projection => "projection",
            Suite::Gaussian2d => "gaussian-2d",
            Suite::GaussianLowerBound => "gaussian-lower-bound",
            Suite::Trajectory => "trajectory",
            Suite::NormDecay => "norm-decay",
            Suite::Decomposition => "decomposition",
        }
    }

    fn default_instances(self) -> usize {
        match self {
            Suite::Equivalence => 500,
            Suite::Projection => 200,
            Suite::Gaussian2d | Suite::GaussianLowerBound => 10,
            Suite::Trajectory | Suite::NormDecay | Suite::Decomposition => 20_000,
        }
    }

    fn default_samples(self) -> usize {
        match self {
            Suite::Gaussian2d => 1_000_000,
            Suite::GaussianLowerBound => 200_000,
            _ => 0,
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = SketchError;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| SketchError::InvalidParameter(format!("unknown suite '{s}'")))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    /// Instances, or trials for the ensemble suites.
    pub instances: Option<usize>,
    /// Monte Carlo samples per instance.
    pub samples: Option<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub suite: String,
    pub passed: bool,
    pub cases: usize,
    /// What `worst` measures.
    pub statistic: String,
    pub worst: f64,
    pub tolerance: f64,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Value>,
}

pub fn run_suite(suite: Suite, opts: &SuiteOptions) -> Result<SuiteOutcome> {
    let instances = opts.instances.unwrap_or(suite.default_instances()).max(1);
    let samples = opts.samples.unwrap_or(suite.default_samples());
    let start = Instant::now();
    let mut out = match suite {
        Suite::Equivalence => equivalence(instances, opts.seed)?,
        Suite::Projection => projection(instances, opts.seed)?,
        Suite::Gaussian2d => gaussian_2d(instances, samples.max(2), opts.seed)?,
        Suite::GaussianLowerBound => gaussian_lower(instances, samples.max(2), opts.seed)?,
        Suite::Trajectory | Suite::NormDecay | Suite::Decomposition => {
            let ens = RkEnsemble::run(instances.max(2), opts.seed)?;
            match suite {
                Suite::Trajectory => ens.trajectory_check()?,
                Suite::NormDecay => ens.norm_decay_check()?,
                _ => ens.decomposition_check()?,
            }
        }
    };
    out.suite = suite.name().to_string();
    out.seconds = start.elapsed().as_secs_f64();
    Ok(out)
}

struct Tracker {
    worst: f64,
    tolerance: f64,
    cases: usize,
    counterexample: Option<Value>,
    statistic: &'static str,
}

impl Tracker {
    fn new(statistic: &'static str, tolerance: f64) -> Self {
        Tracker {
            worst: 0.0,
            tolerance,
            cases: 0,
            counterexample: None,
            statistic,
        }
    }

    fn record(&mut self, value: f64, witness: impl FnOnce() -> Value) {
        self.cases += 1;
        let bad = !(value <= self.tolerance);
        if bad && self.counterexample.is_none() {
            self.counterexample = Some(witness());
        }
        if !(value <= self.worst) {
            self.worst = value;
        }
    }

    fn finish(self) -> SuiteOutcome {
        SuiteOutcome {
            suite: String::new(),
            passed: self.counterexample.is_none(),
            cases: self.cases,
            statistic: self.statistic.to_string(),
            worst: self.worst,
            tolerance: self.tolerance,
            seconds: 0.0,
            counterexample: self.counterexample,
        }
    }
}

fn rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn random_spd(rng: &mut SketchRng, n: usize) -> DenseMatrix {
    let g = gaussian_matrix(rng, n, n);
    let mut b = g.t_matmul(&g).scaled(1.0 / n as f64);
    for i in 0..n {
        b[(i, i)] += 1.0;
    }
    b.symmetrized()
}

fn random_subset(rng: &mut SketchRng, dim: usize, max: usize) -> Vec<usize> {
    let size = rng.random_range(1..=max.min(dim));
    let mut idx = rand::seq::index::sample(rng, dim, size).into_vec();
    idx.sort_unstable();
    idx
}

fn sup_diff(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

/// One random equivalence instance: a method, a system it accepts, a
/// sketch of the shape its kernel expects and a starting point.
struct EquivalenceCase {
    method: Method,
    sys: LinearSystem,
    g: Geometry,
    sketch: Sketch,
    x: Vec<f64>,
}

fn equivalence_case(rng: &mut SketchRng, index: usize) -> Result<EquivalenceCase> {
    // cycle through the general step plus every dedicated kernel
    let method = Method::ALL[index % Method::ALL.len()];
    let n = rng.random_range(1..=8usize);
    let a = if method.needs_spd() {
        random_spd(rng, n)
    } else if method.is_least_squares() {
        let m = rng.random_range(n..=8usize);
        gaussian_matrix(rng, m, n)
    } else {
        let m = rng.random_range(1..=8usize);
        gaussian_matrix(rng, m, n)
    };
    let m = a.rows();
    let xstar = gaussian_vec(rng, n);
    let b = a.matvec(&xstar);
    let sys = LinearSystem::new(a, b)?;
    let g = if method == Method::General {
        Geometry::explicit_spd(random_spd(rng, n))?
    } else {
        build_geometry(method_defaults(method).0, &sys)?
    };
    let q = rng.random_range(1..=3usize);
    let sketch = match method {
        Method::General => Sketch::Dense(gaussian_matrix(rng, m, q)),
        Method::RK => Sketch::Coords(vec![rng.random_range(0..m)]),
        Method::CDpd => Sketch::Coords(vec![rng.random_range(0..n)]),
        Method::CDls => Sketch::ColumnsOfA(vec![rng.random_range(0..n)]),
        Method::BlockRK => Sketch::Coords(random_subset(rng, m, 3)),
        Method::RandNewton => Sketch::Coords(random_subset(rng, n, 3)),
        Method::GaussKaczmarz => Sketch::Dense(gaussian_matrix(rng, m, 1)),
        Method::GaussLS => Sketch::PushforwardA(gaussian_matrix(rng, n, 1)),
        Method::GaussPd => Sketch::Dense(gaussian_matrix(rng, n, 1)),
        Method::BlockGaussPd => Sketch::Dense(gaussian_matrix(rng, n, q.min(n))),
    };
    let x = gaussian_vec(rng, n);
    Ok(EquivalenceCase {
        method,
        sys,
        g,
        sketch,
        x,
    })
}

fn sketch_json(s: &Sketch, sys: &LinearSystem) -> Value {
    match s.to_dense(sys.a()) {
        Ok(d) => json!(rows(&d)),
        Err(_) => json!(format!("{s:?}")),
    }
}

fn equivalence(instances: usize, seed: u64) -> Result<SuiteOutcome> {
    let results: Vec<(f64, Option<Value>)> = (0..instances)
        .into_par_iter()
        .map(|i| -> Result<(f64, Option<Value>)> {
            let mut rng = child(seed, i as u64);
            let c = equivalence_case(&mut rng, i)?;
            let mut general = IterateState::new(c.x.clone());
            general_step(&mut general, &c.sketch, &c.sys, &c.g)?;
            let oracle = project_sketch_oracle(&c.x, &c.sketch, &c.sys, &c.g)?;
            let scale = c.x.iter().chain(&oracle).fold(1.0f64, |m, v| m.max(v.abs()));
            let mut worst = sup_diff(&general.x, &oracle);
            let mut kernel = None;
            if c.method != Method::General {
                let mut st = IterateState::new(c.x.clone());
                specialized_step(c.method, &mut st, &c.sketch, &c.sys)?;
                worst = worst.max(sup_diff(&st.x, &oracle)).max(sup_diff(&st.x, &general.x));
                kernel = Some(st.x);
            }
            let value = worst / scale;
            let witness = (value > EQUIVALENCE_TOL).then(|| {
                json!({
                    "instance": i,
                    "method": c.method.name(),
                    "a": rows(&c.sys.a().to_dense()),
                    "b": c.sys.b(),
                    "geometry": rows(&c.g.dense()),
                    "sketch": sketch_json(&c.sketch, &c.sys),
                    "x": c.x,
                    "general": general.x,
                    "oracle": oracle,
                    "kernel": kernel,
                })
            });
            Ok((value, witness))
        })
        .collect::<Result<_>>()?;
    let mut t = Tracker::new("max |Δx| / max(1, |x|∞)", EQUIVALENCE_TOL);
    for (v, w) in results {
        t.record(v, || w.unwrap_or(Value::Null));
    }
    Ok(t.finish())
}

pub const EQUIVALENCE_TOL: f64 = 1e-9;
pub const PROJECTION_TOL: f64 = 1e-9;
pub const DECOMPOSITION_TOL: f64 = 1e-10;

fn projection(instances: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut t = Tracker::new("max(‖P²−P‖_F, ‖BP−(BP)ᵀ‖_F)", PROJECTION_TOL);
    for i in 0..instances {
        let mut rng = child(seed, i as u64);
        let m = rng.random_range(1..=8usize);
        let n = rng.random_range(1..=8usize);
        let q = rng.random_range(1..=3usize);
        let a = gaussian_matrix(&mut rng, m, n);
        let bmat = random_spd(&mut rng, n);
        let s = Sketch::Dense(gaussian_matrix(&mut rng, m, q));
        let sys = LinearSystem::new(a, vec![0.0; m])?;
        let g = Geometry::explicit_spd(bmat.clone())?;
        let p = projection_matrix(&s, &sys, &g)?;
        let idem = p.matmul(&p).sub(&p).frobenius_norm();
        let bp = bmat.matmul(&p);
        let adj = bp.sub(&bp.transpose()).frobenius_norm();
        let v = idem.max(adj);
        t.record(v, || {
            json!({
                "instance": i,
                "a": rows(&sys.a().to_dense()),
                "geometry": rows(&bmat),
                "sketch": sketch_json(&s, &sys),
                "idempotency": idem,
                "self_adjointness": adj,
            })
        });
    }
    Ok(t.finish())
}

fn gaussian_2d(instances: usize, samples: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut t = Tracker::new("max |MC − closed form| / 3σ halfwidth", 1.0);
    for i in 0..instances {
        let mut rng = child(seed, i as u64);
        let omega = random_spd(&mut rng, 2);
        let exact = expected_gaussian_projection_2d(&omega)?;
        let est = expected_gaussian_projection_mc(&omega, samples, rng.random())?;
        let half = match &est.provenance {
            crate::rates::Provenance::MonteCarlo { halfwidth, .. } => halfwidth.clone(),
            _ => unreachable!("Monte Carlo estimate"),
        };
        let mut worst = 0.0f64;
        for r in 0..2 {
            for c in 0..2 {
                worst = worst.max((est.matrix[(r, c)] - exact[(r, c)]).abs() / half[(r, c)].max(f64::MIN_POSITIVE));
            }
        }
        t.record(worst, || {
            json!({
                "instance": i,
                "omega": rows(&omega),
                "estimate": rows(&est.matrix),
                "closed_form": rows(&exact),
                "halfwidth": rows(&half),
            })
        });
    }
    Ok(t.finish())
}

fn gaussian_lower(instances: usize, samples: usize, seed: u64) -> Result<SuiteOutcome> {
    // statistic: −λmin(M̂ − (2/π)Ω/TrΩ) / halfwidth, which must stay ≤ 1
    let mut t = Tracker::new("−λmin(E − (2/π)Ω/TrΩ) / spectral halfwidth", 1.0);
    const DIMS: [usize; 3] = [2, 3, 5];
    for i in 0..instances {
        let mut rng = child(seed, i as u64);
        let n = DIMS[i % DIMS.len()];
        let omega = random_spd(&mut rng, n);
        let est = expected_gaussian_block_projection_mc(&omega, 1, samples, rng.random())?;
        let floor = omega.scaled(2.0 / (std::f64::consts::PI * omega.trace()));
        let (lmin, _) = lambda_extreme(&est.matrix.sub(&floor).symmetrized())?;
        let half = est.spectral_halfwidth().max(f64::MIN_POSITIVE);
        let v = -lmin / half;
        t.record(v, || {
            json!({
                "instance": i,
                "omega": rows(&omega),
                "estimate": rows(&est.matrix),
                "lambda_min": lmin,
                "halfwidth": half,
            })
        });
    }
    Ok(t.finish())
}

/// Iteration counts the ensemble suites inspect.
pub const TRAJECTORY_CHECKPOINTS: [usize; 3] = [1, 5, 20];
const ENSEMBLE_HORIZON: usize = 20;
const ENSEMBLE_CHUNK: usize = 1024;

/// Repeated RK runs from `x⁰ = 0` on a fixed consistent `10 × 5` Gaussian
/// system with convenient probabilities, keeping every iterate.
pub struct RkEnsemble {
    pub sys: LinearSystem,
    pub xstar: Vec<f64>,
    pub geometry: Geometry,
    pub distribution: DiscreteSampling,
    /// `iterates[k][t]` is `x^k` of trial `t`.
    pub iterates: Vec<Vec<Vec<f64>>>,
}

impl RkEnsemble {
    pub fn run(trials: usize, seed: u64) -> Result<Self> {
        let (m, n) = (10, 5);
        let mut rng = seeded(seed);
        let a = gaussian_matrix(&mut rng, m, n);
        let xstar = uniform_vec(&mut rng, n);
        let b = a.matvec(&xstar);
        let sys = LinearSystem::new(a, b)?;
        let geometry = Geometry::identity(n);
        let samples = row_sketches(m);
        let p = convenient_probabilities(&samples, sys.a(), &geometry)?;
        let distribution = DiscreteSampling::new(samples, p)?;

        let chunks = trials.div_ceil(ENSEMBLE_CHUNK);
        let per_chunk: Vec<Vec<Vec<Vec<f64>>>> = (0..chunks)
            .into_par_iter()
            .map(|c| -> Result<Vec<Vec<Vec<f64>>>> {
                let count = ENSEMBLE_CHUNK.min(trials - c * ENSEMBLE_CHUNK);
                let mut rng = child(seed, c as u64 + 1);
                let mut out = Vec::with_capacity(count);
                for _ in 0..count {
                    let mut st = IterateState::zeros(n);
                    let mut path = Vec::with_capacity(ENSEMBLE_HORIZON + 1);
                    path.push(st.x.clone());
                    for _ in 0..ENSEMBLE_HORIZON {
                        let s = distribution.draw(&mut rng);
                        specialized_step(Method::RK, &mut st, &s, &sys)?;
                        path.push(st.x.clone());
                    }
                    out.push(path);
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let mut iterates: Vec<Vec<_>> = (0..=ENSEMBLE_HORIZON).map(|_| Vec::with_capacity(trials)).collect();
        for path in per_chunk.into_iter().flatten() {
            for (k, x) in path.into_iter().enumerate() {
                iterates[k].push(x);
            }
        }
        Ok(RkEnsemble {
            sys,
            xstar,
            geometry,
            distribution,
            iterates,
        })
    }

    pub fn trials(&self) -> usize {
        self.iterates[0].len()
    }

    pub fn horizon(&self) -> usize {
        self.iterates.len() - 1
    }

    /// Empirical mean and standard deviation of `x^k − x*`, per entry.
    pub fn error_moments(&self, k: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.xstar.len();
        let t = self.trials() as f64;
        let mut mean = vec![0.0; n];
        for x in &self.iterates[k] {
            for i in 0..n {
                mean[i] += (x[i] - self.xstar[i]) / t;
            }
        }
        let mut var = vec![0.0; n];
        for x in &self.iterates[k] {
            for i in 0..n {
                let d = x[i] - self.xstar[i] - mean[i];
                var[i] += d * d / (t - 1.0);
            }
        }
        (mean, var.into_iter().map(f64::sqrt).collect())
    }

    pub fn mean_sq_error(&self, k: usize) -> Result<f64> {
        let t = self.trials() as f64;
        let mut total = 0.0;
        for x in &self.iterates[k] {
            let e = sub(x, &self.xstar);
            total += self.geometry.inner(&e, &e)? / t;
        }
        Ok(total)
    }

    fn trajectory_check(&self) -> Result<SuiteOutcome> {
        let ez = expected_z_discrete(&self.distribution, self.sys.a(), &self.geometry)?;
        let x0 = vec![0.0; self.xstar.len()];
        let theory = fixed_point_trajectory(&ez, &self.geometry, &x0, &self.xstar, self.horizon())?;
        let sqrt_t = (self.trials() as f64).sqrt();
        let mut t = Tracker::new("max |mean(x^k − x*) − theory| / 4σ halfwidth", 1.0);
        for &k in &TRAJECTORY_CHECKPOINTS {
            let (mean, sd) = self.error_moments(k);
            let mut worst = 0.0f64;
            for i in 0..mean.len() {
                let half = (4.0 * sd[i] / sqrt_t).max(1e-15);
                worst = worst.max((mean[i] - theory[k][i]).abs() / half);
            }
            t.record(worst, || json!({"k": k, "empirical": mean, "theory": theory[k], "sd": sd}));
        }
        Ok(t.finish())
    }

    fn norm_decay_check(&self) -> Result<SuiteOutcome> {
        let ez = expected_z_discrete(&self.distribution, self.sys.a(), &self.geometry)?;
        let rho = rho_exact(&ez, &self.geometry)?.rho;
        let e0 = self.mean_sq_error(0)?;
        let slack = 1.0 + 4.0 / (self.trials() as f64).sqrt();
        let mut t = Tracker::new("mean ‖x^k − x*‖²_B / (ρ^k ‖x⁰ − x*‖²_B)", slack);
        for k in 0..=self.horizon() {
            let bound = rho.powi(k as i32) * e0;
            let v = self.mean_sq_error(k)? / bound;
            t.record(v, || json!({"k": k, "rho": rho, "mean_sq_error": v * bound, "bound": bound}));
        }
        Ok(t.finish())
    }

    fn decomposition_check(&self) -> Result<SuiteOutcome> {
        let mut t = Tracker::new("|identity residual| / max(1, E‖x − x*‖²_B)", DECOMPOSITION_TOL);
        for k in 0..=self.horizon() {
            let d = variance_decomposition(&self.iterates[k], &self.xstar, &self.geometry)?;
            let v = d.identity_residual / d.expected_sq_error.max(1.0);
            t.record(v, || json!({"k": k, "terms": d}));
        }
        Ok(t.finish())
    }
}

/// Relative residual `‖Ax − b‖/‖b‖`, shared by callers that check solutions.
pub fn relative_residual(sys: &LinearSystem, x: &[f64]) -> f64 {
    let r = norm2(&sys.residual(x));
    let s = sys.rhs_norm();
    if s > 0.0 {
        r / s
    } else {
        r
    }
}
