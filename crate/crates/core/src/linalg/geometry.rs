use std::sync::Arc;

use once_cell::sync::OnceCell;

use crate::error::{Result, SketchError};
use crate::linalg::dense::{dot, DenseMatrix};
use crate::linalg::eigen::spd_inverse_sqrt;
use crate::linalg::factor::Cholesky;
use crate::linalg::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeometryForm {
    Identity,
    ExplicitSpd,
    GramOfA,
}

#[derive(Clone, Debug)]
enum Kind {
    Identity,
    Explicit(Arc<Matrix>),
    Gram(Arc<Matrix>),
}

/// The SPD matrix `B` defining `⟨x, y⟩_B = xᵀ B y`.
///
/// `GramOfA` keeps `B = AᵀA` implicit: products go through `Aᵀ(Av)` and the
/// Cholesky factor is only built the first time a solve is requested.
#[derive(Clone, Debug)]
pub struct Geometry {
    kind: Kind,
    n: usize,
    factor: OnceCell<Cholesky>,
}

impl Geometry {
    pub fn identity(n: usize) -> Self {
        Geometry {
            kind: Kind::Identity,
            n,
            factor: OnceCell::new(),
        }
    }

    /// Validates positive definiteness by factoring immediately.
    pub fn explicit_spd(b: impl Into<Matrix>) -> Result<Self> {
        let b = b.into();
        if b.rows() != b.cols() {
            return Err(SketchError::dims("geometry matrix", b.rows(), b.cols()));
        }
        let factor = Cholesky::factor(&b.to_dense())?;
        Ok(Geometry {
            n: b.rows(),
            kind: Kind::Explicit(Arc::new(b)),
            factor: OnceCell::with_value(factor),
        })
    }

    /// Like `explicit_spd`, but the factorization (and with it the
    /// definiteness check) waits until a solve needs it.
    pub fn explicit_shared(b: Arc<Matrix>) -> Result<Self> {
        if b.rows() != b.cols() {
            return Err(SketchError::dims("geometry matrix", b.rows(), b.cols()));
        }
        Ok(Geometry {
            n: b.rows(),
            kind: Kind::Explicit(b),
            factor: OnceCell::new(),
        })
    }

    pub fn gram_of_a(a: Arc<Matrix>) -> Self {
        Geometry {
            n: a.cols(),
            kind: Kind::Gram(a),
            factor: OnceCell::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn form(&self) -> GeometryForm {
        match self.kind {
            Kind::Identity => GeometryForm::Identity,
            Kind::Explicit(_) => GeometryForm::ExplicitSpd,
            Kind::Gram(_) => GeometryForm::GramOfA,
        }
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.n {
            Err(SketchError::dims("geometry vector", self.n, len))
        } else {
            Ok(())
        }
    }

    /// `B v`
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check(v.len())?;
        Ok(match &self.kind {
            Kind::Identity => v.to_vec(),
            Kind::Explicit(b) => b.matvec(v),
            Kind::Gram(a) => a.matvec_t(&a.matvec(v)),
        })
    }

    /// Dense `B`; materializes `AᵀA` for the Gram form.
    pub fn dense(&self) -> DenseMatrix {
        match &self.kind {
            Kind::Identity => DenseMatrix::identity(self.n),
            Kind::Explicit(b) => b.to_dense(),
            Kind::Gram(a) => {
                let d = a.to_dense();
                d.t_matmul(&d).symmetrized()
            }
        }
    }

    /// Cholesky factor of `B`; `None` for the identity.
    pub fn factor(&self) -> Result<Option<&Cholesky>> {
        match self.kind {
            Kind::Identity => Ok(None),
            _ => self.factor.get_or_try_init(|| Cholesky::factor(&self.dense())).map(Some),
        }
    }

    /// `B⁻¹ v`
    pub fn solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check(v.len())?;
        Ok(match self.factor()? {
            None => v.to_vec(),
            Some(c) => c.solve(v),
        })
    }

    /// `B⁻¹ M`
    pub fn solve_matrix(&self, m: &DenseMatrix) -> Result<DenseMatrix> {
        self.check(m.rows())?;
        Ok(match self.factor()? {
            None => m.clone(),
            Some(c) => c.solve_matrix(m),
        })
    }

    pub fn inner(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(dot(&self.apply(x)?, y))
    }

    pub fn norm(&self, x: &[f64]) -> Result<f64> {
        Ok(self.inner(x, x)?.max(0.0).sqrt())
    }

    /// Symmetric `B^{-1/2}` from the eigendecomposition of `B`.
    pub fn inverse_sqrt(&self) -> Result<DenseMatrix> {
        match self.kind {
            Kind::Identity => Ok(DenseMatrix::identity(self.n)),
            _ => spd_inverse_sqrt(&self.dense()),
        }
    }
}

/// `‖x‖_B = √(xᵀBx)`
pub fn b_norm(x: &[f64], g: &Geometry) -> Result<f64> {
    g.norm(x)
}

/// `B^{-1/2} M B^{-1/2}`
pub fn spd_inverse_sqrt_conjugate(m: &DenseMatrix, g: &Geometry) -> Result<DenseMatrix> {
    if m.rows() != g.dim() || m.cols() != g.dim() {
        return Err(SketchError::dims("conjugated matrix", g.dim(), m.rows()));
    }
    if g.form() == GeometryForm::Identity {
        return Ok(m.clone());
    }
    let r = g.inverse_sqrt()?;
    Ok(r.matmul(m).matmul(&r).symmetrized())
}
