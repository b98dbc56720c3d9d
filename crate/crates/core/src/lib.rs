//! Sketch-and-project randomized iterative solvers for consistent linear
//! systems `Ax = b`, with exact convergence-rate analysis and sampling
//! probability optimization.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod io;
pub mod linalg;
pub mod probopt;
pub mod rates;
pub mod rng;
pub mod sketch;
pub mod solver;
pub mod verify;

pub use error::{MtxError, Result, SketchError};
