use std::sync::Arc;

use once_cell::sync::OnceCell;

use crate::error::{Result, SketchError};
use crate::linalg::dense::norm2;
use crate::linalg::eigen::SYMMETRY_TOL;
use crate::linalg::Matrix;

/// The pair `(A, b)` plus lazily built views the step kernels keep asking for.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    a: Arc<Matrix>,
    b: Vec<f64>,
    transpose: OnceCell<Matrix>,
    row_norms_sq: OnceCell<Vec<f64>>,
    col_norms_sq: OnceCell<Vec<f64>>,
    symmetric: OnceCell<bool>,
}

impl LinearSystem {
    pub fn new(a: impl Into<Matrix>, b: Vec<f64>) -> Result<Self> {
        Self::from_shared(Arc::new(a.into()), b)
    }

    pub fn from_shared(a: Arc<Matrix>, b: Vec<f64>) -> Result<Self> {
        if b.len() != a.rows() {
            return Err(SketchError::dims("right-hand side", a.rows(), b.len()));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(SketchError::NonFinite("right-hand side"));
        }
        Ok(LinearSystem {
            a,
            b,
            transpose: OnceCell::new(),
            row_norms_sq: OnceCell::new(),
            col_norms_sq: OnceCell::new(),
            symmetric: OnceCell::new(),
        })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn shared_a(&self) -> Arc<Matrix> {
        self.a.clone()
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn rows(&self) -> usize {
        self.a.rows()
    }

    pub fn cols(&self) -> usize {
        self.a.cols()
    }

    /// `Aᵀ` stored explicitly, so column access is row access.
    pub fn transpose(&self) -> &Matrix {
        self.transpose.get_or_init(|| self.a.transpose())
    }

    pub fn row_norms_sq(&self) -> &[f64] {
        self.row_norms_sq.get_or_init(|| self.a.row_norms_sq())
    }

    pub fn col_norms_sq(&self) -> &[f64] {
        self.col_norms_sq.get_or_init(|| self.transpose().row_norms_sq())
    }

    pub fn is_symmetric(&self) -> bool {
        *self.symmetric.get_or_init(|| self.a.is_symmetric(SYMMETRY_TOL))
    }

    /// `Ax − b`
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let mut r = self.a.matvec(x);
        for (ri, bi) in r.iter_mut().zip(&self.b) {
            *ri -= bi;
        }
        r
    }

    pub fn rhs_norm(&self) -> f64 {
        norm2(&self.b)
    }
}
