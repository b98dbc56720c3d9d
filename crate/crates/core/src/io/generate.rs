//! Synthetic test problems.
//!
//! Every generator draws `A` first and then `x*` from one ChaCha stream
//! seeded by `seed`, so equal seeds reproduce the instance bit for bit.
//!
//! Generator semantics for the sparse kinds:
//!
//! * `sprandn`: a diagonal with singular values log-spaced from `1` down to
//!   `rc` is mixed by random Givens rotations (alternating rows and columns)
//!   until the nonzero fraction reaches `density`. Rotations preserve the
//!   singular values, so `σ_min/σ_max = rc` up to rounding whenever
//!   `min(m, n) > 1`.
//! * `sprandsym`: a symmetric pattern with each off-diagonal pair and each
//!   diagonal entry present independently with probability `density`,
//!   standard normal values, then a diagonal shift chosen so that
//!   `λ_min/λ_max = rc`. The extreme eigenvalues come from Lanczos.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SketchError};
use crate::io::libsvm::read_libsvm;
use crate::io::problem::{ridge_system, ProblemInstance};
use crate::linalg::{lanczos_extremes, DenseMatrix, Matrix, SparseMatrix};
use crate::rng::{gaussian_matrix, gaussian_vec, seeded, uniform_vec, SketchRng};

/// Regularization used when a ridge spec does not give one.
pub const DEFAULT_RIDGE_LAMBDA: f64 = 1.0;

const MAX_DENSE_WORK: usize = 50_000_000;
const LANCZOS_STEPS: usize = 300;

fn default_lambda() -> f64 {
    DEFAULT_RIDGE_LAMBDA
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    /// Entries i.i.d. `U[0,1]`.
    Uniform { m: usize, n: usize },
    /// Entries i.i.d. `N(0,1)`.
    Gaussian { m: usize, n: usize },
    Sprandn { m: usize, n: usize, density: f64, rc: f64 },
    Hilbert { n: usize },
    Sprandsym { n: usize, density: f64, rc: f64 },
    /// Ridge Newton system built from a LIBSVM data file.
    Ridge {
        data: PathBuf,
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    /// Synthetic classification data with `±1` labels; see [`synthetic_dataset`].
    Classification { m: usize, n: usize, density: f64 },
}

impl GeneratorSpec {
    pub fn name(&self) -> String {
        match self {
            GeneratorSpec::Uniform { m, n } => format!("uniform-{m}x{n}"),
            GeneratorSpec::Gaussian { m, n } => format!("gaussian-{m}x{n}"),
            GeneratorSpec::Sprandn { m, n, density, rc } => format!("sprandn-{m}x{n}-d{density}-rc{rc}"),
            GeneratorSpec::Hilbert { n } => format!("hilbert-{n}"),
            GeneratorSpec::Sprandsym { n, density, rc } => format!("sprandsym-{n}-d{density}-rc{rc}"),
            GeneratorSpec::Ridge { data, lambda } => {
                let stem = data.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
                format!("ridge-{stem}-l{lambda}")
            }
            GeneratorSpec::Classification { m, n, density } => format!("classification-{m}x{n}-d{density}"),
        }
    }

    fn validate(&self) -> Result<()> {
        let dims = |m: usize, n: usize| {
            if m == 0 || n == 0 {
                Err(SketchError::InvalidParameter(format!("dimensions must be positive, got {m}×{n}")))
            } else if m.saturating_mul(n) > MAX_DENSE_WORK {
                Err(SketchError::InvalidParameter(format!("{m}×{n} exceeds the generator size limit")))
            } else {
                Ok(())
            }
        };
        let density = |d: f64| {
            if d > 0.0 && d <= 1.0 {
                Ok(())
            } else {
                Err(SketchError::InvalidParameter(format!("density must lie in (0, 1], got {d}")))
            }
        };
        match *self {
            GeneratorSpec::Uniform { m, n } | GeneratorSpec::Gaussian { m, n } => dims(m, n),
            GeneratorSpec::Sprandn { m, n, density: d, rc } => {
                dims(m, n)?;
                density(d)?;
                if rc > 0.0 && rc <= 1.0 {
                    Ok(())
                } else {
                    Err(SketchError::InvalidParameter(format!("rc must lie in (0, 1], got {rc}")))
                }
            }
            GeneratorSpec::Hilbert { n } => dims(n, n),
            GeneratorSpec::Sprandsym { n, density: d, rc } => {
                dims(n, n)?;
                density(d)?;
                if rc > 0.0 && rc < 1.0 {
                    Ok(())
                } else {
                    Err(SketchError::InvalidParameter(format!("rc must lie in (0, 1), got {rc}")))
                }
            }
            GeneratorSpec::Ridge { lambda, .. } => {
                if lambda > 0.0 && lambda.is_finite() {
                    Ok(())
                } else {
                    Err(SketchError::InvalidParameter(format!("ridge parameter must be positive, got {lambda}")))
                }
            }
            GeneratorSpec::Classification { m, n, density: d } => {
                dims(m, n)?;
                density(d)
            }
        }
    }
}

/// Compact command-line form: `uniform:MxN`, `gaussian:MxN`, `hilbert:N`,
/// `sprandn:MxN:DENSITY:RC`, `sprandsym:N:DENSITY:RC`,
/// `classification:MxN:DENSITY`, `ridge:PATH[:LAMBDA]`.
impl std::str::FromStr for GeneratorSpec {
    type Err = SketchError;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || SketchError::InvalidParameter(format!("cannot parse generator '{s}'"));
        let parts: Vec<&str> = s.split(':').collect();
        let size = |t: &str| -> Result<(usize, usize)> {
            let (m, n) = t.split_once(['x', 'X']).ok_or_else(bad)?;
            Ok((m.parse().map_err(|_| bad())?, n.parse().map_err(|_| bad())?))
        };
        let num = |t: &str| -> Result<f64> { t.parse().map_err(|_| bad()) };
        let int = |t: &str| -> Result<usize> { t.parse().map_err(|_| bad()) };
        let spec = match parts.as_slice() {
            ["uniform", mn] => {
                let (m, n) = size(mn)?;
                GeneratorSpec::Uniform { m, n }
            }
            ["gaussian", mn] => {
                let (m, n) = size(mn)?;
                GeneratorSpec::Gaussian { m, n }
            }
            ["hilbert", n] => GeneratorSpec::Hilbert { n: int(n)? },
            ["sprandn", mn, d, rc] => {
                let (m, n) = size(mn)?;
                GeneratorSpec::Sprandn { m, n, density: num(d)?, rc: num(rc)? }
            }
            ["sprandsym", n, d, rc] => GeneratorSpec::Sprandsym { n: int(n)?, density: num(d)?, rc: num(rc)? },
            ["classification", mn, d] => {
                let (m, n) = size(mn)?;
                GeneratorSpec::Classification { m, n, density: num(d)? }
            }
            ["ridge", path] => GeneratorSpec::Ridge { data: PathBuf::from(path), lambda: DEFAULT_RIDGE_LAMBDA },
            ["ridge", path, l] => GeneratorSpec::Ridge { data: PathBuf::from(path), lambda: num(l)? },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Builds the instance described by `spec`. Classification data is
/// returned as the raw (generally inconsistent) pair `(A, labels)`.
pub fn generate(spec: &GeneratorSpec, seed: u64) -> Result<ProblemInstance> {
    spec.validate()?;
    let mut rng = seeded(seed);
    let name = spec.name();
    let a: Matrix = match *spec {
        GeneratorSpec::Uniform { m, n } => {
            DenseMatrix::from_row_major(m, n, uniform_vec(&mut rng, m * n))?.into()
        }
        GeneratorSpec::Gaussian { m, n } => gaussian_matrix(&mut rng, m, n).into(),
        GeneratorSpec::Sprandn { m, n, density, rc } => sprandn(m, n, density, rc, &mut rng)?.into(),
        GeneratorSpec::Hilbert { n } => hilbert(n).into(),
        GeneratorSpec::Sprandsym { n, density, rc } => sprandsym(n, density, rc, &mut rng)?.into(),
        GeneratorSpec::Ridge { ref data, lambda } => {
            let (a, labels) = read_libsvm(data)?;
            return ridge_system(name, &Matrix::Sparse(a), &labels, lambda);
        }
        GeneratorSpec::Classification { m, n, density } => {
            let (a, labels) = synthetic_dataset(m, n, density, &mut rng)?;
            return ProblemInstance::new(name, a, labels, None);
        }
    };
    let xstar = uniform_vec(&mut rng, a.cols());
    let b = a.matvec(&xstar);
    ProblemInstance::new(name, a, b, Some(xstar))
}

/// `H_ij = 1/(i + j − 1)` with 1-based indices.
pub fn hilbert(n: usize) -> DenseMatrix {
    let mut h = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] = 1.0 / (i + j + 1) as f64;
        }
    }
    h
}

fn log_spaced(k: usize, rc: f64) -> Vec<f64> {
    if k == 1 {
        return vec![1.0];
    }
    (0..k).map(|i| rc.powf(i as f64 / (k - 1) as f64)).collect()
}

fn nnz_of(v: &[f64]) -> usize {
    v.iter().filter(|x| **x != 0.0).count()
}

fn sprandn(m: usize, n: usize, density: f64, rc: f64, rng: &mut SketchRng) -> Result<SparseMatrix> {
    let k = m.min(n);
    let mut sigma = log_spaced(k, rc);
    sigma.shuffle(rng);
    let mut d = DenseMatrix::zeros(m, n);
    let mut rows: Vec<usize> = (0..m).collect();
    let mut cols: Vec<usize> = (0..n).collect();
    rows.shuffle(rng);
    cols.shuffle(rng);
    for (t, s) in sigma.iter().enumerate() {
        d[(rows[t], cols[t])] = *s;
    }
    let target = ((density * (m * n) as f64).ceil() as usize).min(m * n);
    let mut nnz = k;
    // Rows and columns left empty by the diagonal are fed into rotations
    // first; a rotation in the other direction never changes emptiness.
    let mut empty_rows: Vec<usize> = rows[k..].to_vec();
    let mut empty_cols: Vec<usize> = cols[k..].to_vec();
    let max_rotations = 20 * (m + n) + target;
    let mut rotations = 0;
    while (nnz < target || !empty_rows.is_empty() || !empty_cols.is_empty()) && rotations < max_rotations {
        rotations += 1;
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (s, c) = theta.sin_cos();
        let by_rows = if empty_rows.is_empty() != empty_cols.is_empty() {
            !empty_rows.is_empty()
        } else {
            rotations % 2 == 0
        };
        if by_rows && m > 1 {
            let (i, j) = rotation_pair(m, &mut empty_rows, &rows[..k], rng);
            let ri = d.row(i).to_vec();
            let rj = d.row(j).to_vec();
            let before = nnz_of(&ri) + nnz_of(&rj);
            let new_i: Vec<f64> = ri.iter().zip(&rj).map(|(a, b)| c * a + s * b).collect();
            let new_j: Vec<f64> = ri.iter().zip(&rj).map(|(a, b)| -s * a + c * b).collect();
            nnz = nnz + nnz_of(&new_i) + nnz_of(&new_j) - before;
            d.row_mut(i).copy_from_slice(&new_i);
            d.row_mut(j).copy_from_slice(&new_j);
        } else if n > 1 {
            let (i, j) = rotation_pair(n, &mut empty_cols, &cols[..k], rng);
            let ci = d.column(i);
            let cj = d.column(j);
            let before = nnz_of(&ci) + nnz_of(&cj);
            let new_i: Vec<f64> = ci.iter().zip(&cj).map(|(a, b)| c * a + s * b).collect();
            let new_j: Vec<f64> = ci.iter().zip(&cj).map(|(a, b)| -s * a + c * b).collect();
            nnz = nnz + nnz_of(&new_i) + nnz_of(&new_j) - before;
            d.set_column(i, &new_i);
            d.set_column(j, &new_j);
        }
    }
    Ok(SparseMatrix::from_dense(&d))
}

/// Two distinct indices below `dim`: an empty one paired with a filled one
/// while empties remain, otherwise a uniform pair.
fn rotation_pair(dim: usize, empty: &mut Vec<usize>, filled: &[usize], rng: &mut SketchRng) -> (usize, usize) {
    if let Some(i) = empty.pop() {
        if !filled.is_empty() {
            return (i, filled[rng.random_range(0..filled.len())]);
        }
    }
    let i = rng.random_range(0..dim);
    let mut j = rng.random_range(0..dim - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

fn sprandsym(n: usize, density: f64, rc: f64, rng: &mut SketchRng) -> Result<SparseMatrix> {
    let mut triplets = Vec::new();
    for i in 0..n {
        for j in 0..=i {
            if rng.random::<f64>() < density {
                let v = gaussian_vec(rng, 1)[0];
                triplets.push((i, j, v));
                if i != j {
                    triplets.push((j, i, v));
                }
            }
        }
    }
    let s = SparseMatrix::from_triplets(n, n, &triplets)?;
    let start = gaussian_vec(rng, n);
    let (lo, hi) = lanczos_extremes(n, LANCZOS_STEPS.min(n), &start, |v| s.matvec(v))?;
    let shift = if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()) {
        // Flat spectrum: no shift reaches rc, so land on the identity instead.
        1.0 - lo
    } else {
        (rc * hi - lo) / (1.0 - rc)
    };
    let mut out: Vec<(usize, usize, f64)> = s.triplets().collect();
    out.extend((0..n).map(|i| (i, i, shift)));
    SparseMatrix::from_triplets(n, n, &out)
}

/// Sparse features with `U[0,1]` nonzeros at the given density, and labels
/// `sign(a_iᵀw + 0.5·ξ_i)` for a Gaussian `w` and noise `ξ`. Stands in for
/// small LIBSVM benchmark sets.
pub fn synthetic_dataset(m: usize, n: usize, density: f64, rng: &mut SketchRng) -> Result<(SparseMatrix, Vec<f64>)> {
    let w = gaussian_vec(rng, n);
    let mut triplets = Vec::new();
    let mut labels = Vec::with_capacity(m);
    for i in 0..m {
        let mut score = 0.0;
        for (j, wj) in w.iter().enumerate() {
            if rng.random::<f64>() < density {
                let v: f64 = rng.random();
                triplets.push((i, j, v));
                score += v * wj;
            }
        }
        let noise = gaussian_vec(rng, 1)[0];
        labels.push(if score + 0.5 * noise >= 0.0 { 1.0 } else { -1.0 });
    }
    Ok((SparseMatrix::from_triplets(m, n, &triplets)?, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::problem::condition_estimate;
    use crate::linalg::{lambda_extreme, symmetric_eigen};

    #[test]
    fn hilbert_three() {
        let h = hilbert(3);
        let want = DenseMatrix::from_rows(&[
            vec![1.0, 1.0 / 2.0, 1.0 / 3.0],
            vec![1.0 / 2.0, 1.0 / 3.0, 1.0 / 4.0],
            vec![1.0 / 3.0, 1.0 / 4.0, 1.0 / 5.0],
        ]);
        assert_eq!(h, want);
    }

    #[test]
    fn hilbert_hundred_condition_saturates() {
        let p = generate(&GeneratorSpec::Hilbert { n: 100 }, 0).unwrap().with_condition_estimate();
        let kappa = p.metadata.kappa2.expect("estimate");
        assert!(kappa >= 1e15, "kappa {kappa:e}");
    }

    #[test]
    fn uniform_entries_and_consistency() {
        let p = generate(&GeneratorSpec::Uniform { m: 30, n: 10 }, 4).unwrap();
        let d = p.a().to_dense();
        assert!(d.as_slice().iter().all(|&v| (0.0..1.0).contains(&v)));
        let x = p.xstar.as_ref().unwrap();
        assert!(x.iter().all(|&v| (0.0..1.0).contains(&v)));
        assert!(p.metadata.consistent);
        assert_eq!((p.metadata.m, p.metadata.n, p.metadata.nnz), (30, 10, 300));
    }

    #[test]
    fn seeds_reproduce_and_differ() {
        let spec = GeneratorSpec::Sprandn { m: 40, n: 20, density: 0.2, rc: 0.1 };
        let a = generate(&spec, 9).unwrap();
        let b = generate(&spec, 9).unwrap();
        let c = generate(&spec, 10).unwrap();
        assert_eq!(a.a(), b.a());
        assert_eq!(a.b(), b.b());
        assert_ne!(a.a(), c.a());
    }

    #[test]
    fn sprandn_hits_density_and_rc() {
        let (m, n) = (60, 30);
        let p = generate(&GeneratorSpec::Sprandn { m, n, density: 0.1, rc: 0.01 }, 3).unwrap();
        let frac = p.metadata.nnz as f64 / (m * n) as f64;
        assert!((0.1..0.2).contains(&frac), "density {frac}");
        let kappa = condition_estimate(p.a()).unwrap().unwrap();
        assert!((1.0 / kappa - 0.01).abs() <= 0.001, "rc {}", 1.0 / kappa);
    }

    #[test]
    fn sprandn_leaves_no_empty_rows_or_columns() {
        for (m, n) in [(60, 20), (15, 40)] {
            let p = generate(&GeneratorSpec::Sprandn { m, n, density: 0.3, rc: 0.2 }, 9).unwrap();
            let d = p.a().to_dense();
            assert!((0..m).all(|i| d.row(i).iter().any(|v| *v != 0.0)));
            assert!((0..n).all(|j| d.column(j).iter().any(|v| *v != 0.0)));
            let kappa = condition_estimate(p.a()).unwrap().unwrap();
            assert!((1.0 / kappa - 0.2).abs() < 1e-9);
        }
    }

    #[test]
    fn sprandsym_is_spd_with_target_rc() {
        let p = generate(&GeneratorSpec::Sprandsym { n: 50, density: 0.1, rc: 0.05 }, 1).unwrap();
        assert!(p.a().is_symmetric(0.0));
        let e = symmetric_eigen(&p.a().to_dense()).unwrap();
        let (lo, hi) = (e.eigenvalues[0], e.eigenvalues[49]);
        assert!(lo > 0.0);
        assert!((lo / hi - 0.05).abs() <= 0.005, "rc {}", lo / hi);
    }

    #[test]
    fn invalid_parameters() {
        for spec in [
            GeneratorSpec::Sprandn { m: 4, n: 4, density: 0.0, rc: 0.5 },
            GeneratorSpec::Sprandn { m: 4, n: 4, density: 0.5, rc: 1.5 },
            GeneratorSpec::Sprandsym { n: 4, density: 1.2, rc: 0.5 },
            GeneratorSpec::Sprandsym { n: 4, density: 0.5, rc: 1.0 },
            GeneratorSpec::Uniform { m: 0, n: 3 },
        ] {
            assert!(generate(&spec, 0).is_err(), "{spec:?}");
        }
    }

    #[test]
    fn ridge_from_generated_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.libsvm");
        let (a, y) = synthetic_dataset(40, 5, 0.6, &mut seeded(2)).unwrap();
        crate::io::libsvm::write_libsvm(&path, &a, &y).unwrap();
        let p = generate(&GeneratorSpec::Ridge { data: path, lambda: 1.0 }, 0).unwrap();
        let (lo, _) = lambda_extreme(&p.a().to_dense()).unwrap();
        assert!(lo >= 1.0 - 1e-10);
        assert!(p.xstar.is_some());
    }

    #[test]
    fn compact_form_parses() {
        assert_eq!("uniform:200x50".parse::<GeneratorSpec>().unwrap(), GeneratorSpec::Uniform { m: 200, n: 50 });
        assert_eq!("hilbert:7".parse::<GeneratorSpec>().unwrap(), GeneratorSpec::Hilbert { n: 7 });
        assert_eq!(
            "sprandsym:30:0.1:0.01".parse::<GeneratorSpec>().unwrap(),
            GeneratorSpec::Sprandsym { n: 30, density: 0.1, rc: 0.01 }
        );
        assert!("sprandn:3x3:2:0.5".parse::<GeneratorSpec>().is_err());
        assert!("pascal:4".parse::<GeneratorSpec>().is_err());
        assert!("uniform:4".parse::<GeneratorSpec>().is_err());
    }

    #[test]
    fn spec_serializes_with_kind_tag() {
        let spec = GeneratorSpec::Sprandn { m: 5, n: 4, density: 0.5, rc: 0.25 };
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"kind\":\"sprandn\""));
        let back: GeneratorSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let ridge: GeneratorSpec = serde_json::from_str(r#"{"kind":"ridge","data":"x.libsvm"}"#).unwrap();
        assert_eq!(ridge, GeneratorSpec::Ridge { data: "x.libsvm".into(), lambda: 1.0 });
    }
}
