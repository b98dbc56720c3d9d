use serde::{Deserialize, Serialize};

use crate::error::{Result, SketchError};
use crate::linalg::dense::norm2;
use crate::linalg::{symmetric_eigen, Cholesky, DenseMatrix, Matrix};
use crate::rng::{seeded, uniform_vec};
use crate::solver::LinearSystem;

/// Relative residual a known solution must reach.
pub const SOLUTION_TOL: f64 = 1e-8;

/// Largest dimension for which `κ₂` is computed by a dense eigensolve.
pub const MAX_CONDITION_DIM: usize = 600;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemMetadata {
    pub name: String,
    pub m: usize,
    pub n: usize,
    pub nnz: usize,
    pub kappa2: Option<f64>,
    /// `b` is known to lie in the range of `A`.
    pub consistent: bool,
}

#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub system: LinearSystem,
    pub xstar: Option<Vec<f64>>,
    pub metadata: ProblemMetadata,
}

impl ProblemInstance {
    /// A supplied `xstar` must satisfy `‖A·xstar − b‖ ≤ 1e-8‖b‖`; it then
    /// also marks the instance consistent.
    pub fn new(name: impl Into<String>, a: impl Into<Matrix>, b: Vec<f64>, xstar: Option<Vec<f64>>) -> Result<Self> {
        let system = LinearSystem::new(a, b)?;
        Self::from_system(name, system, xstar)
    }

    pub fn from_system(name: impl Into<String>, system: LinearSystem, xstar: Option<Vec<f64>>) -> Result<Self> {
        if let Some(x) = &xstar {
            if x.len() != system.cols() {
                return Err(SketchError::dims("known solution", system.cols(), x.len()));
            }
            let r = norm2(&system.residual(x));
            let scale = system.rhs_norm();
            if r > SOLUTION_TOL * scale {
                return Err(SketchError::InvalidParameter(format!(
                    "known solution leaves residual {r:.3e} against ‖b‖ = {scale:.3e}"
                )));
            }
        }
        let metadata = ProblemMetadata {
            name: name.into(),
            m: system.rows(),
            n: system.cols(),
            nnz: system.a().nnz(),
            kappa2: None,
            consistent: xstar.is_some(),
        };
        Ok(ProblemInstance {
            system,
            xstar,
            metadata,
        })
    }

    /// `b = A·x*` with `x*` entries i.i.d. `U[0,1]`.
    pub fn with_consistent_rhs(name: impl Into<String>, a: impl Into<Matrix>, seed: u64) -> Result<Self> {
        let a = a.into();
        let mut rng = seeded(seed);
        let xstar = uniform_vec(&mut rng, a.cols());
        let b = a.matvec(&xstar);
        Self::new(name, a, b, Some(xstar))
    }

    pub fn a(&self) -> &Matrix {
        self.system.a()
    }

    pub fn b(&self) -> &[f64] {
        self.system.b()
    }

    /// Fills `metadata.kappa2` when the problem is small enough.
    pub fn with_condition_estimate(mut self) -> Self {
        self.metadata.kappa2 = condition_estimate(self.a()).ok().flatten();
        self
    }

    /// The normal equations `AᵀA x = Aᵀb`, which are always consistent.
    /// A solution is attached when `AᵀA` admits a Cholesky factor that
    /// solves the normal equations to the stated tolerance.
    pub fn least_squares_reformulation(&self) -> Result<Self> {
        let gram = self.a().gram();
        let rhs = self.a().matvec_t(self.b());
        let name = format!("{}-normal", self.metadata.name);
        let x = attached_solution(&gram, &rhs);
        let mut out = Self::new(name, sparsify_if_sparse(gram, self.a()), rhs, x)?;
        out.metadata.consistent = true;
        Ok(out)
    }
}

/// `κ₂ = σ_max/σ_min` over the nonzero singular values.
///
/// A symmetric matrix uses its own eigenvalues without truncation, so for
/// nearly singular inputs the estimate saturates near `1/ε` instead of
/// dropping the small (noise-level) eigenvalues. Other shapes go through
/// the smaller Gram matrix, whose eigenvalues are `σ²`. Returns `None`
/// above `MAX_CONDITION_DIM` or for a singular symmetric matrix.
pub fn condition_estimate(a: &Matrix) -> Result<Option<f64>> {
    let (m, n) = (a.rows(), a.cols());
    if m.min(n) == 0 || m.min(n) > MAX_CONDITION_DIM {
        return Ok(None);
    }
    if m == n && a.is_symmetric(0.0) {
        let e = symmetric_eigen(&a.to_dense())?;
        let max = e.eigenvalues.iter().fold(0.0f64, |s, l| s.max(l.abs()));
        let min = e.eigenvalues.iter().fold(f64::INFINITY, |s, l| s.min(l.abs()));
        return Ok((min > 0.0).then(|| max / min));
    }
    let g = if n <= m {
        a.gram()
    } else {
        let d = a.to_dense();
        d.matmul(&d.transpose()).symmetrized()
    };
    let e = symmetric_eigen(&g)?;
    let tol = e.rank_tolerance();
    let kept: Vec<f64> = e.eigenvalues.iter().copied().filter(|&l| l > tol).collect();
    match (kept.first(), kept.last()) {
        (Some(lo), Some(hi)) => Ok(Some((hi / lo).sqrt())),
        _ => Ok(None),
    }
}

/// Ridge Newton system `(AᵀA + λI) w = Aᵀy` from data `A` and labels `y`.
pub fn ridge_system(name: impl Into<String>, a: &Matrix, labels: &[f64], lambda: f64) -> Result<ProblemInstance> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(SketchError::InvalidParameter(format!(
            "ridge parameter must be positive, got {lambda}"
        )));
    }
    if labels.len() != a.rows() {
        return Err(SketchError::dims("ridge labels", a.rows(), labels.len()));
    }
    let mut h = a.gram();
    for i in 0..h.rows() {
        h[(i, i)] += lambda;
    }
    let rhs = a.matvec_t(labels);
    let x = attached_solution(&h, &rhs);
    let mut out = ProblemInstance::new(name, sparsify_if_sparse(h, a), rhs, x)?;
    out.metadata.consistent = true;
    Ok(out)
}

const MAX_ATTACHED_DIM: usize = 4000;

fn attached_solution(h: &DenseMatrix, rhs: &[f64]) -> Option<Vec<f64>> {
    if h.rows() > MAX_ATTACHED_DIM {
        return None;
    }
    let x = Cholesky::factor(h).ok()?.solve(rhs);
    let r = crate::linalg::dense::sub(&h.matvec(&x), rhs);
    (norm2(&r) <= SOLUTION_TOL * norm2(rhs)).then_some(x)
}

fn sparsify_if_sparse(h: DenseMatrix, like: &Matrix) -> Matrix {
    match like {
        Matrix::Dense(_) => Matrix::Dense(h),
        Matrix::Sparse(_) => {
            let s = crate::linalg::SparseMatrix::from_dense(&h);
            if s.nnz() * 3 < h.rows() * h.cols() {
                Matrix::Sparse(s)
            } else {
                Matrix::Dense(h)
            }
        }
    }
}
