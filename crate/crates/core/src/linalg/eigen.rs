//! Symmetric eigendecomposition (cyclic Jacobi for small matrices,
//! Householder tridiagonalization with implicit QR beyond), plus the
//! spectral helpers built on it (pseudoinverse application, extreme
//! eigenvalues, SPD inverse square roots).

use crate::error::{Result, SketchError};
use crate::linalg::dense::{dot, DenseMatrix};

/// Relative asymmetry tolerated by the symmetric routines.
pub const SYMMETRY_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 100;

/// Above this size Jacobi's sweep cost loses to tridiagonal QR.
const JACOBI_MAX_DIM: usize = 12;

/// `M = V diag(λ) Vᵀ` with eigenvalues ascending and orthonormal columns in `V`.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DenseMatrix,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.eigenvectors.column(k)
    }

    /// `V f(Λ) Vᵀ`
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        let n = self.dim();
        let v = &self.eigenvectors;
        let weights: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for k in 0..n {
                    s += v[(i, k)] * weights[k] * v[(j, k)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.reconstruct_with(|l| l)
    }

    /// Eigenvalues at or below this magnitude are treated as zero.
    pub fn rank_tolerance(&self) -> f64 {
        let n = self.dim().max(1) as f64;
        let max = self.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        n * f64::EPSILON * max
    }
}

pub fn symmetric_eigen(m: &DenseMatrix) -> Result<EigenDecomposition> {
    m.ensure_symmetric(SYMMETRY_TOL)?;
    if m.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(SketchError::NonFinite("eigen input"));
    }
    let m = m.symmetrized();
    if m.rows() <= JACOBI_MAX_DIM {
        Ok(jacobi(m))
    } else {
        tridiagonal_qr(&m)
    }
}

fn tridiagonal_qr(m: &DenseMatrix) -> Result<EigenDecomposition> {
    let n = m.rows();
    let a = nalgebra::DMatrix::from_row_slice(n, n, m.as_slice());
    let e = nalgebra::SymmetricEigen::try_new(a, f64::EPSILON, 0)
        .ok_or_else(|| SketchError::OracleFailure("symmetric QR did not converge".into()))?;
    let mut v = DenseMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            v[(i, j)] = e.eigenvectors[(i, j)];
        }
    }
    Ok(sorted(e.eigenvalues.iter().copied().collect(), v))
}

fn jacobi(mut a: DenseMatrix) -> EigenDecomposition {
    let n = a.rows();
    let mut v = DenseMatrix::identity(n);
    let scale = a.frobenius_norm();
    if scale == 0.0 || n <= 1 {
        return sorted(a.diagonal(), v);
    }

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= 1e-16 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                // negligible against both diagonal entries: zero it without rotating
                if apq.abs() <= 1e-18 * app.abs().min(aqq.abs()) {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate_columns(&mut a, p, q, c, s);
                rotate_rows(&mut a, p, q, c, s);
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                rotate_columns(&mut v, p, q, c, s);
            }
        }
    }
    sorted(a.diagonal(), v)
}

fn rotate_columns(m: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..m.rows() {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
}

fn rotate_rows(m: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..m.cols() {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
}

fn sorted(values: Vec<f64>, vectors: DenseMatrix) -> EigenDecomposition {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let eigenvalues = order.iter().map(|&i| values[i]).collect();
    let eigenvectors = vectors.select_cols(&order);
    EigenDecomposition {
        eigenvalues,
        eigenvectors,
    }
}

/// `(λ_min, λ_max)` of a symmetric matrix.
pub fn lambda_extreme(m: &DenseMatrix) -> Result<(f64, f64)> {
    let e = symmetric_eigen(m)?;
    let n = e.dim();
    if n == 0 {
        return Err(SketchError::InvalidParameter("empty matrix has no eigenvalues".into()));
    }
    Ok((e.eigenvalues[0], e.eigenvalues[n - 1]))
}

/// `(λ_min, λ_max)` of a symmetric operator given only through products,
/// by Lanczos with full reorthogonalization started from `start`.
///
/// With `steps ≥ n` the Krylov space is the whole space and the result is
/// exact up to rounding.
pub fn lanczos_extremes(
    n: usize,
    steps: usize,
    start: &[f64],
    apply: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(SketchError::InvalidParameter("empty operator has no eigenvalues".into()));
    }
    if start.len() != n {
        return Err(SketchError::dims("lanczos start vector", n, start.len()));
    }
    let norm = dot(start, start).sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(SketchError::InvalidParameter("lanczos start vector must be nonzero".into()));
    }
    let steps = steps.clamp(1, n);
    let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|v| v / norm).collect()];
    let mut alpha = Vec::with_capacity(steps);
    let mut beta: Vec<f64> = Vec::with_capacity(steps);
    let mut scale = 0.0f64;
    for k in 0..steps {
        let mut w = apply(&basis[k]);
        let a = dot(&w, &basis[k]);
        alpha.push(a);
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&w, q);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let b = dot(&w, &w).sqrt();
        scale = scale.max(a.abs()).max(b);
        if k + 1 == steps || b <= 1e-13 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|v| v / b).collect());
    }
    let m = alpha.len();
    let mut t = DenseMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    lambda_extreme(&t)
}

/// Smallest eigenvalue together with a unit eigenvector for it.
pub fn lambda_min_with_vector(m: &DenseMatrix) -> Result<(f64, Vec<f64>)> {
    let e = symmetric_eigen(m)?;
    Ok((e.eigenvalues[0], e.vector(0)))
}

/// `M† v` for symmetric PSD `M`, truncating eigenvalues within the rank tolerance.
pub fn pseudo_apply(m: &DenseMatrix, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != m.rows() {
        return Err(SketchError::dims("pseudo_apply vector", m.rows(), v.len()));
    }
    let e = symmetric_eigen(m)?;
    Ok(pseudo_apply_decomposed(&e, v))
}

pub(crate) fn pseudo_apply_decomposed(e: &EigenDecomposition, v: &[f64]) -> Vec<f64> {
    let n = e.dim();
    let tol = e.rank_tolerance();
    let mut out = vec![0.0; n];
    for k in 0..n {
        let lambda = e.eigenvalues[k];
        if lambda.abs() <= tol {
            continue;
        }
        let u = e.vector(k);
        let coef = dot(&u, v) / lambda;
        for (o, ui) in out.iter_mut().zip(&u) {
            *o += coef * ui;
        }
    }
    out
}

/// Moore-Penrose pseudoinverse of a symmetric matrix.
pub fn pseudo_inverse_symmetric(m: &DenseMatrix) -> Result<DenseMatrix> {
    let e = symmetric_eigen(m)?;
    let tol = e.rank_tolerance();
    Ok(e.reconstruct_with(|l| if l.abs() <= tol { 0.0 } else { 1.0 / l }))
}

/// Symmetric `B^{-1/2}` for SPD `B`.
pub fn spd_inverse_sqrt(b: &DenseMatrix) -> Result<DenseMatrix> {
    let e = symmetric_eigen(b)?;
    let floor = e.rank_tolerance();
    if let Some((index, &pivot)) = e.eigenvalues.iter().enumerate().find(|(_, &l)| l <= floor) {
        return Err(SketchError::NotPositiveDefinite { index, pivot });
    }
    Ok(e.reconstruct_with(|l| 1.0 / l.sqrt()))
}

/// Symmetric `M^{1/2}` for PSD `M`; tiny negative eigenvalues are clamped.
pub fn psd_sqrt(m: &DenseMatrix) -> Result<DenseMatrix> {
    let e = symmetric_eigen(m)?;
    Ok(e.reconstruct_with(|l| l.max(0.0).sqrt()))
}
