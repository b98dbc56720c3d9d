use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SketchError>;

#[derive(Debug, Error)]
pub enum SketchError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("matrix is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (pivot {pivot:.3e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid sampling: sample {index}: {reason}")]
    InvalidSampling { index: usize, reason: String },

    #[error("sampling is not complete: {}", describe_incomplete(*.failing_index, *.rank, *.needed))]
    IncompleteSampling {
        failing_index: Option<usize>,
        rank: usize,
        needed: usize,
    },

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("method {method} is incompatible with this system: {reason}")]
    IncompatibleMethod { method: String, reason: String },

    #[error("projection oracle failed: {0}")]
    OracleFailure(String),

    #[error("iteration diverged at k = {iteration}: relative residual {residual:.3e}")]
    Diverged { iteration: usize, residual: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{0}")]
    Statistics(String),

    #[error("method {method}, trial {trial}: {source}")]
    Trial {
        method: String,
        trial: usize,
        #[source]
        source: Box<SketchError>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: {kind}")]
    MatrixMarket {
        path: PathBuf,
        line: usize,
        kind: MtxError,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

/// The distinct ways a Matrix Market file can be rejected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MtxError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported qualifier: {0}")]
    Unsupported(String),
    #[error("malformed size line: {0}")]
    MalformedSize(String),
    #[error("entry ({row}, {col}) outside a {rows}×{cols} matrix")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("expected {expected} entries, found {found}")]
    EntryCountMismatch { expected: usize, found: usize },
    #[error("malformed entry: {0}")]
    MalformedEntry(String),
}

fn describe_incomplete(failing: Option<usize>, rank: usize, needed: usize) -> String {
    match failing {
        Some(i) => format!("S_iᵀA lacks full row rank for sample {i} (0-based)"),
        None => format!("Aᵀ[S_1 … S_r] has rank {rank} < {needed}"),
    }
}

impl SketchError {
    pub(crate) fn dims(context: &'static str, expected: usize, actual: usize) -> Self {
        SketchError::DimensionMismatch {
            context,
            expected,
            actual,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SketchError::Io {
            path: path.into(),
            source,
        }
    }
}
