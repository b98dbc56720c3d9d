//! Dense and sparse primitives, factorizations and spectral helpers.

pub mod dense;
pub mod eigen;
pub mod factor;
pub mod geometry;
pub mod matrix;
pub mod sparse;

pub use dense::{axpy, dot, norm2, DenseMatrix};
pub use eigen::{
    lambda_extreme, lanczos_extremes, pseudo_apply, pseudo_inverse_symmetric, spd_inverse_sqrt, symmetric_eigen,
    EigenDecomposition,
};
pub use factor::{lu_solve, rank, Cholesky, PivotedQr};
pub use geometry::{b_norm, spd_inverse_sqrt_conjugate, Geometry, GeometryForm};
pub use matrix::Matrix;
pub use sparse::SparseMatrix;

#[cfg(test)]
pub(crate) fn rng_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = crate::rng::seeded(seed);
    crate::rng::gaussian_matrix(&mut rng, rows, cols)
}
