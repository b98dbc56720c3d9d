//! JSON experiment descriptions for the benchmark driver.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SketchError};
use crate::io::generate::{generate, GeneratorSpec};
use crate::io::libsvm::read_libsvm;
use crate::io::mtx::{read_matrix_market, read_vector};
use crate::io::problem::{ridge_system, ProblemInstance};
use crate::linalg::Matrix;
use crate::solver::{BlockSize, GeometryChoice, Method, SamplingKind};

/// How a LIBSVM dataset `(A, y)` becomes a linear system.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormulation {
    /// `(A, y)` as is for least-squares methods, the normal equations otherwise.
    #[default]
    Auto,
    Raw,
    LeastSquares,
    Ridge { lambda: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum ProblemSource {
    Generate {
        generator: GeneratorSpec,
        /// Defaults to the experiment seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    MatrixMarket {
        path: PathBuf,
        /// Without a right-hand side file, `b = A·x*` for a random `x*`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rhs: Option<PathBuf>,
    },
    Libsvm {
        path: PathBuf,
        #[serde(default)]
        formulation: DatasetFormulation,
    },
}

impl ProblemSource {
    /// Loads the system `method` will run on; `seed` feeds random data.
    pub fn load(&self, seed: u64, method: Option<Method>) -> Result<ProblemInstance> {
        match self {
            ProblemSource::Generate { generator, seed: own } => {
                let p = generate(generator, own.unwrap_or(seed))?;
                if matches!(generator, GeneratorSpec::Classification { .. }) {
                    finish_dataset(p, &DatasetFormulation::Auto, method)
                } else {
                    Ok(p)
                }
            }
            ProblemSource::MatrixMarket { path, rhs } => {
                let a = read_matrix_market(path)?;
                let name = stem(path);
                match rhs {
                    Some(r) => ProblemInstance::new(name, a, read_vector(r)?, None),
                    None => ProblemInstance::with_consistent_rhs(name, a, seed),
                }
            }
            ProblemSource::Libsvm { path, formulation } => {
                let (a, y) = read_libsvm(path)?;
                let name = stem(path);
                if let DatasetFormulation::Ridge { lambda } = formulation {
                    return ridge_system(format!("ridge-{name}"), &Matrix::Sparse(a), &y, *lambda);
                }
                let p = ProblemInstance::new(name, a, y, None)?;
                finish_dataset(p, formulation, method)
            }
        }
    }
}

fn finish_dataset(p: ProblemInstance, how: &DatasetFormulation, method: Option<Method>) -> Result<ProblemInstance> {
    let normal = match how {
        DatasetFormulation::Raw => false,
        DatasetFormulation::LeastSquares => true,
        DatasetFormulation::Auto => !method.is_some_and(|m| m.is_least_squares()),
        DatasetFormulation::Ridge { .. } => unreachable!("handled by the caller"),
    };
    if normal {
        p.least_squares_reformulation()
    } else {
        Ok(p)
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("matrix")
        .to_string()
}

/// How sampling probabilities are chosen for a discrete law.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbChoice {
    #[default]
    Convenient,
    Uniform,
    /// Maximizes `λ_min(E[Z])` before running.
    Optimized,
    Explicit(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<SamplingKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometryChoice>,
    #[serde(default)]
    pub probs: ProbChoice,
    #[serde(default)]
    pub block_size: BlockSize,
    #[serde(default)]
    pub uniform_blocks: bool,
    /// Column label; defaults to the method name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl MethodSpec {
    pub fn new(method: Method) -> Self {
        MethodSpec {
            method,
            sampling: None,
            geometry: None,
            probs: ProbChoice::default(),
            block_size: BlockSize::default(),
            uniform_blocks: false,
            label: None,
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.method.name().to_string())
    }
}

/// Metric summarized by the bands.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandMetric {
    #[default]
    RelResidual,
    BNormError,
    EuclidError,
}

fn default_tolerance() -> f64 {
    1e-4
}
fn default_max_iters() -> usize {
    1_000_000
}
fn default_max_seconds() -> f64 {
    300.0
}
fn default_trials() -> usize {
    10
}
fn default_quantiles() -> Vec<f64> {
    vec![0.05, 0.95]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: ProblemSource,
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_max_seconds")]
    pub max_seconds: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub metric: BandMetric,
    /// Add a `ρ_c^k` column to each banded trace.
    #[serde(default)]
    pub overlay_theory: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_stride: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(problem: ProblemSource, methods: Vec<MethodSpec>) -> Self {
        ExperimentConfig {
            problem,
            methods,
            tolerance: default_tolerance(),
            max_iters: default_max_iters(),
            max_seconds: default_max_seconds(),
            trials: default_trials(),
            quantiles: default_quantiles(),
            seed: 0,
            metric: BandMetric::default(),
            overlay_theory: false,
            log_stride: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SketchError::InvalidParameter(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if let Some(q) = self.quantiles.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
            return bad(format!("quantile {q} outside (0, 1)"));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return bad(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if !(self.max_seconds > 0.0) {
            return bad(format!("max_seconds must be positive, got {}", self.max_seconds));
        }
        if self.log_stride == Some(0) {
            return bad("log_stride must be positive".into());
        }
        let mut labels: Vec<String> = self.methods.iter().map(MethodSpec::label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return bad(format!("duplicate method label '{}'; set distinct labels", w[0]));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SketchError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| SketchError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentConfig {
        let mut cd = MethodSpec::new(Method::CDls);
        cd.probs = ProbChoice::Explicit(vec![0.1, 0.2 + 1e-17, 0.7]);
        let mut cfg = ExperimentConfig::new(
            ProblemSource::Generate {
                generator: GeneratorSpec::Uniform { m: 200, n: 50 },
                seed: None,
            },
            vec![MethodSpec::new(Method::RK), cd],
        );
        cfg.tolerance = 1.0 / 3.0 * 1e-4;
        cfg.quantiles = vec![0.05, 0.95];
        cfg
    }

    #[test]
    fn json_round_trip() {
        let cfg = sample();
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_json(
            r#"{"problem": {"source": "generate", "generator": {"kind": "hilbert", "n": 5}},
                "methods": [{"method": "rk"}, {"method": "cd-ls", "probs": "uniform"}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.tolerance, 1e-4);
        assert_eq!(cfg.quantiles, vec![0.05, 0.95]);
        assert_eq!(cfg.methods[1].probs, ProbChoice::Uniform);
        assert_eq!(cfg.methods[0].block_size, BlockSize::Default);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = sample();
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = sample();
        cfg.quantiles = vec![0.0, 0.5];
        assert!(cfg.validate().is_err());
        let mut cfg = sample();
        cfg.quantiles = vec![1.0];
        assert!(cfg.validate().is_err());
        let mut cfg = sample();
        cfg.methods.push(MethodSpec::new(Method::RK));
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::from_json(r#"{"problem": {"source": "nowhere"}, "methods": []}"#).is_err());
    }

    #[test]
    fn dataset_goes_to_normal_equations_unless_least_squares() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.libsvm");
        std::fs::write(&path, "1 1:1\n-1 1:1\n1 1:2\n").unwrap();
        let src = ProblemSource::Libsvm {
            path: path.clone(),
            formulation: DatasetFormulation::Auto,
        };
        let raw = src.load(0, Some(Method::CDls)).unwrap();
        assert_eq!(raw.metadata.m, 3);
        let normal = src.load(0, Some(Method::RK)).unwrap();
        assert_eq!((normal.metadata.m, normal.metadata.n), (1, 1));
        assert_eq!(normal.b(), &[2.0]);
        assert!(normal.metadata.consistent);
    }
}
