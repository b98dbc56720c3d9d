use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SketchError};
use crate::linalg::dense::norm2;
use crate::solver::system::LinearSystem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Closed-form step for any `(B, S)` pair.
    General,
    #[serde(rename = "rk")]
    RK,
    #[serde(rename = "cd-pd")]
    CDpd,
    #[serde(rename = "cd-ls")]
    CDls,
    #[serde(rename = "block-rk")]
    BlockRK,
    #[serde(rename = "newton")]
    RandNewton,
    #[serde(rename = "gk")]
    GaussKaczmarz,
    #[serde(rename = "gauss-ls")]
    GaussLS,
    #[serde(rename = "gauss-pd")]
    GaussPd,
    #[serde(rename = "block-gauss-pd")]
    BlockGaussPd,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::General,
        Method::RK,
        Method::CDpd,
        Method::CDls,
        Method::BlockRK,
        Method::RandNewton,
        Method::GaussKaczmarz,
        Method::GaussLS,
        Method::GaussPd,
        Method::BlockGaussPd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::General => "general",
            Method::RK => "rk",
            Method::CDpd => "cd-pd",
            Method::CDls => "cd-ls",
            Method::BlockRK => "block-rk",
            Method::RandNewton => "newton",
            Method::GaussKaczmarz => "gk",
            Method::GaussLS => "gauss-ls",
            Method::GaussPd => "gauss-pd",
            Method::BlockGaussPd => "block-gauss-pd",
        }
    }

    /// `B = A`, so `A` has to be SPD.
    pub fn needs_spd(self) -> bool {
        matches!(
            self,
            Method::CDpd | Method::RandNewton | Method::GaussPd | Method::BlockGaussPd
        )
    }

    /// `B = AᵀA`; these also make sense on inconsistent systems.
    pub fn is_least_squares(self) -> bool {
        matches!(self, Method::CDls | Method::GaussLS)
    }

    pub fn is_gaussian(self) -> bool {
        matches!(
            self,
            Method::GaussKaczmarz | Method::GaussLS | Method::GaussPd | Method::BlockGaussPd
        )
    }

    /// Structural checks that can be made without factoring anything.
    pub fn check_compatible(self, sys: &LinearSystem) -> Result<()> {
        let fail = |reason: String| {
            Err(SketchError::IncompatibleMethod {
                method: self.name().into(),
                reason,
            })
        };
        if self.needs_spd() {
            if sys.rows() != sys.cols() {
                return fail(format!("needs a square matrix, got {}x{}", sys.rows(), sys.cols()));
            }
            if !sys.is_symmetric() {
                return fail("needs a symmetric positive definite matrix, got a nonsymmetric one".into());
            }
            if let Some(i) = sys.a().diagonal().iter().position(|d| !(*d > 0.0)) {
                return fail(format!("diagonal entry {i} is not positive"));
            }
        }
        if matches!(self, Method::RK | Method::BlockRK) {
            if let Some(i) = sys.row_norms_sq().iter().position(|v| *v == 0.0) {
                return fail(format!("row {i} of A is zero"));
            }
        }
        if self == Method::CDls {
            if let Some(j) = sys.col_norms_sq().iter().position(|v| *v == 0.0) {
                return fail(format!("column {j} of A is zero"));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = SketchError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let key = match lower.as_str() {
            "rand-newton" | "randomized-newton" => "newton",
            "kaczmarz" => "rk",
            "gauss-kaczmarz" => "gk",
            other => other,
        };
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| SketchError::InvalidParameter(format!("unknown method '{s}'")))
    }
}

/// The iterate `x^k` with an optional cached residual `Ax^k − b`.
#[derive(Clone, Debug, PartialEq)]
pub struct IterateState {
    pub x: Vec<f64>,
    pub k: usize,
    residual: Option<Vec<f64>>,
}

impl IterateState {
    pub fn new(x: Vec<f64>) -> Self {
        IterateState {
            x,
            k: 0,
            residual: None,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![0.0; n])
    }

    pub fn cached_residual(&self) -> Option<&[f64]> {
        self.residual.as_deref()
    }

    /// The residual, recomputed only if the last step dropped the cache.
    pub fn residual(&mut self, sys: &LinearSystem) -> &[f64] {
        if self.residual.is_none() {
            self.residual = Some(sys.residual(&self.x));
        }
        self.residual.as_deref().unwrap()
    }

    pub(crate) fn residual_mut(&mut self, sys: &LinearSystem) -> (&mut Vec<f64>, &mut Vec<f64>) {
        if self.residual.is_none() {
            self.residual = Some(sys.residual(&self.x));
        }
        (&mut self.x, self.residual.as_mut().unwrap())
    }

    pub(crate) fn residual_if_cached(&mut self) -> (&mut Vec<f64>, Option<&mut Vec<f64>>) {
        (&mut self.x, self.residual.as_mut())
    }

    pub fn invalidate(&mut self) {
        self.residual = None;
    }

    /// Relative drift `‖cache − (Ax − b)‖ / max(‖Ax − b‖, ‖b‖)`; zero without a cache.
    pub fn audit_residual(&self, sys: &LinearSystem) -> f64 {
        match &self.residual {
            None => 0.0,
            Some(cache) => {
                let fresh = sys.residual(&self.x);
                let diff: f64 = cache
                    .iter()
                    .zip(&fresh)
                    .map(|(u, v)| (u - v) * (u - v))
                    .sum::<f64>()
                    .sqrt();
                let scale = norm2(&fresh).max(sys.rhs_norm());
                if scale == 0.0 {
                    diff
                } else {
                    diff / scale
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
            assert_eq!(serde_json::from_str::<Method>(&json).unwrap(), m);
        }
        assert!("nope".parse::<Method>().is_err());
    }

    #[test]
    fn compatibility_checks() {
        let nonsym = LinearSystem::new(DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]), vec![1.0, 1.0]).unwrap();
        assert!(Method::CDpd.check_compatible(&nonsym).is_err());
        assert!(Method::RK.check_compatible(&nonsym).is_ok());
        let rect = LinearSystem::new(DenseMatrix::zeros(3, 2), vec![0.0; 3]).unwrap();
        assert!(Method::GaussPd.check_compatible(&rect).is_err());
        assert!(Method::RK.check_compatible(&rect).is_err());
    }

    #[test]
    fn residual_cache_and_audit() {
        let sys = LinearSystem::new(DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]), vec![1.0, 1.0]).unwrap();
        let mut st = IterateState::new(vec![1.0, 0.0]);
        assert_eq!(st.residual(&sys), &[0.0, 2.0]);
        assert_eq!(st.audit_residual(&sys), 0.0);
        st.x[1] = 1.0;
        assert!(st.audit_residual(&sys) > 0.1);
        st.invalidate();
        assert_eq!(st.residual(&sys), &[2.0, 6.0]);
    }
}
