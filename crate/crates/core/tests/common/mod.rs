#![allow(dead_code)]

use sketchsolve::linalg::{DenseMatrix, Matrix};
use sketchsolve::rng::{gaussian_matrix, seeded, uniform_vec, SketchRng};
use sketchsolve::solver::LinearSystem;

/// `GᵀG + n·I` for a Gaussian `G`, comfortably positive definite.
pub fn random_spd(rng: &mut SketchRng, n: usize) -> DenseMatrix {
    let g = gaussian_matrix(rng, n, n);
    let mut m = g.t_matmul(&g).symmetrized();
    for i in 0..n {
        m[(i, i)] += n as f64;
    }
    m
}

/// A consistent system `A x* = b` with Gaussian `A` and `x*` uniform on `[0,1]ⁿ`.
pub fn consistent(rng: &mut SketchRng, a: DenseMatrix) -> (LinearSystem, Vec<f64>) {
    let xstar = uniform_vec(rng, a.cols());
    let b = a.matvec(&xstar);
    (LinearSystem::new(a, b).unwrap(), xstar)
}

pub fn gaussian_system(seed: u64, m: usize, n: usize) -> (LinearSystem, Vec<f64>) {
    let mut rng = seeded(seed);
    let a = gaussian_matrix(&mut rng, m, n);
    consistent(&mut rng, a)
}

pub fn spd_system(seed: u64, n: usize) -> (LinearSystem, Vec<f64>) {
    let mut rng = seeded(seed);
    let a = random_spd(&mut rng, n);
    consistent(&mut rng, a)
}

pub fn lambda_min(m: &DenseMatrix) -> f64 {
    sketchsolve::linalg::symmetric_eigen(m).unwrap().eigenvalues[0]
}

pub fn frobenius_sq(a: &Matrix) -> f64 {
    a.to_dense().frobenius_norm().powi(2)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
