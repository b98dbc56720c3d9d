//! One sketch-and-project step, in closed form and per method.
//!
//! Every kernel updates the state in place and returns its flop estimate
//! under the model "2·nnz per sparse product, 2mn per dense product".

use crate::error::{Result, SketchError};
use crate::linalg::dense::{dot, DenseMatrix};
use crate::linalg::eigen::pseudo_apply;
use crate::linalg::{lu_solve, Cholesky, Geometry, Matrix, PivotedQr};
use crate::sketch::Sketch;
use crate::solver::state::{IterateState, Method};
use crate::solver::system::LinearSystem;

fn check_state(state: &IterateState, sys: &LinearSystem) -> Result<()> {
    if state.x.len() != sys.cols() {
        return Err(SketchError::dims("iterate", sys.cols(), state.x.len()));
    }
    Ok(())
}

fn residual_cost(state: &IterateState, sys: &LinearSystem) -> u64 {
    if state.cached_residual().is_some() {
        0
    } else {
        sys.a().product_flops()
    }
}

fn cube(q: usize) -> u64 {
    let q = q as u64;
    q * q * q / 3 + 2 * q * q
}

/// `M⁻¹ v` for a small Gram matrix `M`: Cholesky, or the pseudoinverse once
/// a pivot drops below tolerance.
pub fn solve_small_psd(m: &DenseMatrix, v: &[f64]) -> Result<Vec<f64>> {
    let m = m.symmetrized();
    match Cholesky::factor(&m) {
        Ok(c) => Ok(c.solve(v)),
        Err(SketchError::NotPositiveDefinite { .. }) => pseudo_apply(&m, v),
        Err(e) => Err(e),
    }
}

/// `x ← x − B⁻¹AᵀS (SᵀAB⁻¹AᵀS)† Sᵀ(Ax − b)`
pub fn general_step(state: &mut IterateState, s: &Sketch, sys: &LinearSystem, g: &Geometry) -> Result<u64> {
    check_state(state, sys)?;
    if g.dim() != sys.cols() {
        return Err(SketchError::dims("geometry", sys.cols(), g.dim()));
    }
    let a = sys.a();
    let (n, q) = (sys.cols(), s.width());
    let mut flops = residual_cost(state, sys);
    let sr = s.transpose_apply(a, state.residual(sys))?;
    let ats = s.at_s(a)?;
    let binv_ats = g.solve_matrix(&ats)?;
    let inner = ats.t_matmul(&binv_ats);
    let y = pseudo_apply(&inner, &sr)?;
    let dx = binv_ats.matvec(&y);
    for (xi, d) in state.x.iter_mut().zip(&dx) {
        *xi -= d;
    }
    state.invalidate();
    state.k += 1;
    let (n64, q64) = (n as u64, q as u64);
    flops += 2 * a.rows() as u64 * q64 + a.product_flops() * q64;
    flops += if g.factor()?.is_some() { 2 * n64 * n64 * q64 } else { 0 };
    flops += 2 * n64 * q64 * q64 + 4 * q64 * q64 * q64 + 2 * n64 * q64 + n64;
    Ok(flops)
}

/// The scalar form for a single column `s`; `Aᵀs = 0` leaves `x` alone.
pub fn vector_sketch_step(state: &mut IterateState, s: &[f64], sys: &LinearSystem, g: &Geometry) -> Result<u64> {
    check_state(state, sys)?;
    if s.len() != sys.rows() {
        return Err(SketchError::dims("vector sketch", sys.rows(), s.len()));
    }
    let a = sys.a();
    let ats = a.matvec_t(s);
    let mut flops = a.product_flops();
    state.k += 1;
    if ats.iter().all(|v| *v == 0.0) {
        return Ok(flops);
    }
    let d = g.solve(&ats)?;
    let denom = dot(&ats, &d);
    flops += residual_cost(state, sys);
    let num = dot(s, state.residual(sys));
    let step = num / denom;
    for (xi, di) in state.x.iter_mut().zip(&d) {
        *xi -= step * di;
    }
    state.invalidate();
    let n = sys.cols() as u64;
    flops += 2 * sys.rows() as u64 + 4 * n + if g.factor()?.is_some() { 2 * n * n } else { 0 };
    Ok(flops)
}

fn wrong_sketch(method: Method, expected: &str) -> SketchError {
    SketchError::IncompatibleMethod {
        method: method.name().into(),
        reason: format!("the kernel expects {expected}"),
    }
}

fn single(method: Method, c: &[usize], what: &str) -> Result<usize> {
    match c {
        [i] => Ok(*i),
        _ => Err(wrong_sketch(method, what)),
    }
}

fn check_index(i: usize, bound: usize) -> Result<()> {
    if i >= bound {
        Err(SketchError::dims("sketch index", bound, i))
    } else {
        Ok(())
    }
}

/// The dedicated update of `method`, whose geometry is implied by the method.
pub fn specialized_step(method: Method, state: &mut IterateState, s: &Sketch, sys: &LinearSystem) -> Result<u64> {
    check_state(state, sys)?;
    let a = sys.a();
    let (m, n) = (sys.rows(), sys.cols());
    let flops = match (method, s) {
        (Method::RK, Sketch::Coords(c)) => {
            let i = single(method, c, "a single row index")?;
            check_index(i, m)?;
            let ri = a.row_dot(i, &state.x) - sys.b()[i];
            a.row_axpy(i, -ri / sys.row_norms_sq()[i], &mut state.x);
            state.invalidate();
            4 * a.row_nnz(i) as u64
        }
        (Method::CDpd, Sketch::Coords(c)) => {
            let i = single(method, c, "a single coordinate")?;
            check_index(i, m)?;
            let ri = a.row_dot(i, &state.x) - sys.b()[i];
            let delta = -ri / a.get(i, i);
            let (x, cache) = state.residual_if_cached();
            x[i] += delta;
            let nnz = a.row_nnz(i) as u64;
            match cache {
                Some(r) => {
                    // symmetric A: column i equals row i
                    a.row_axpy(i, delta, r);
                    4 * nnz
                }
                None => 2 * nnz,
            }
        }
        (Method::CDls, Sketch::ColumnsOfA(c)) => {
            let j = single(method, c, "a single column index")?;
            check_index(j, n)?;
            let cost = residual_cost(state, sys);
            let at = sys.transpose();
            let (x, r) = state.residual_mut(sys);
            let delta = -at.row_dot(j, r) / sys.col_norms_sq()[j];
            x[j] += delta;
            at.row_axpy(j, delta, r);
            cost + 4 * at.row_nnz(j) as u64
        }
        (Method::BlockRK, Sketch::Coords(rows)) => {
            for &i in rows {
                check_index(i, m)?;
            }
            let ar = a.select_rows_dense(rows);
            let rr: Vec<f64> = rows
                .iter()
                .map(|&i| a.row_dot(i, &state.x) - sys.b()[i])
                .collect();
            let y = solve_small_psd(&ar.gram_rows(), &rr)?;
            let dx = ar.matvec_t(&y);
            for (xi, d) in state.x.iter_mut().zip(&dx) {
                *xi -= d;
            }
            state.invalidate();
            let q = rows.len() as u64;
            let nnz: u64 = rows.iter().map(|&i| a.row_nnz(i) as u64).sum();
            2 * nnz + 2 * q * nnz + cube(rows.len()) + 2 * nnz
        }
        (Method::RandNewton, Sketch::Coords(c)) => {
            for &i in c {
                check_index(i, m)?;
            }
            let rc: Vec<f64> = c.iter().map(|&i| a.row_dot(i, &state.x) - sys.b()[i]).collect();
            let acc = principal(a, c);
            let y = solve_small_psd(&acc, &rc)?;
            let nnz: u64 = c.iter().map(|&i| a.row_nnz(i) as u64).sum();
            let (x, cache) = state.residual_if_cached();
            for (&i, yi) in c.iter().zip(&y) {
                x[i] -= yi;
            }
            let mut flops = 2 * nnz + cube(c.len()) + c.len() as u64;
            if let Some(r) = cache {
                for (&i, yi) in c.iter().zip(&y) {
                    a.row_axpy(i, -yi, r);
                }
                flops += 2 * nnz;
            }
            flops
        }
        (Method::GaussKaczmarz, Sketch::Dense(eta)) if eta.cols() == 1 && eta.rows() == m => {
            let eta = eta.as_slice();
            let cost = residual_cost(state, sys);
            let num = dot(eta, state.residual(sys));
            let ate = a.matvec_t(eta);
            let denom = dot(&ate, &ate);
            if denom > 0.0 {
                let step = num / denom;
                for (xi, d) in state.x.iter_mut().zip(&ate) {
                    *xi -= step * d;
                }
            }
            state.invalidate();
            cost + a.product_flops() + 2 * m as u64 + 4 * n as u64
        }
        (Method::GaussLS, Sketch::PushforwardA(eta)) if eta.cols() == 1 && eta.rows() == n => {
            let eta = eta.as_slice();
            let cost = residual_cost(state, sys);
            let w = a.matvec(eta);
            let denom = dot(&w, &w);
            let (x, r) = state.residual_mut(sys);
            if denom > 0.0 {
                let step = dot(&w, r) / denom;
                for (xi, e) in x.iter_mut().zip(eta) {
                    *xi -= step * e;
                }
                for (ri, wi) in r.iter_mut().zip(&w) {
                    *ri -= step * wi;
                }
            }
            cost + a.product_flops() + 6 * m as u64 + 2 * n as u64
        }
        (Method::GaussPd, Sketch::Dense(eta)) if eta.cols() == 1 && eta.rows() == n => {
            let eta = eta.as_slice();
            let cost = residual_cost(state, sys);
            let w = a.matvec(eta);
            let denom = dot(eta, &w);
            let (x, r) = state.residual_mut(sys);
            if denom > 0.0 {
                let step = dot(eta, r) / denom;
                for (xi, e) in x.iter_mut().zip(eta) {
                    *xi -= step * e;
                }
                for (ri, wi) in r.iter_mut().zip(&w) {
                    *ri -= step * wi;
                }
            }
            cost + a.product_flops() + 8 * n as u64
        }
        (Method::BlockGaussPd, Sketch::Dense(sk)) if sk.rows() == n => {
            let q = sk.cols();
            let cost = residual_cost(state, sys);
            let w = a.matmul_dense(sk);
            let inner = sk.t_matmul(&w);
            let (x, r) = state.residual_mut(sys);
            let y = solve_small_psd(&inner, &sk.matvec_t(r))?;
            let dx = sk.matvec(&y);
            let dr = w.matvec(&y);
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi -= d;
            }
            for (ri, d) in r.iter_mut().zip(&dr) {
                *ri -= d;
            }
            let (n64, q64) = (n as u64, q as u64);
            cost + a.product_flops() * q64 + 2 * n64 * q64 * q64 + cube(q) + 6 * n64 * q64
        }
        (Method::General, _) => {
            return Err(SketchError::IncompatibleMethod {
                method: method.name().into(),
                reason: "has no specialized kernel; use general_step".into(),
            })
        }
        (Method::RK | Method::CDpd | Method::BlockRK | Method::RandNewton, _) => {
            return Err(wrong_sketch(method, "a coordinate sketch"))
        }
        (Method::CDls, _) => return Err(wrong_sketch(method, "a column-of-A sketch")),
        (Method::GaussKaczmarz, _) => return Err(wrong_sketch(method, "a dense m x 1 Gaussian sketch")),
        (Method::GaussLS, _) => return Err(wrong_sketch(method, "a pushforward n x 1 Gaussian sketch")),
        (Method::GaussPd, _) => return Err(wrong_sketch(method, "a dense n x 1 Gaussian sketch")),
        (Method::BlockGaussPd, _) => return Err(wrong_sketch(method, "a dense n x q Gaussian sketch")),
    };
    state.k += 1;
    Ok(flops)
}

fn principal(a: &Matrix, c: &[usize]) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(c.len(), c.len());
    for (p, &i) in c.iter().enumerate() {
        for (q, &j) in c.iter().enumerate() {
            out[(p, q)] = a.get(i, j);
        }
    }
    out
}

/// The B-projection of `x` onto `{y : SᵀAy = Sᵀb}`, by a direct KKT solve.
///
/// Dependent rows of `SᵀA` are dropped first (pivoted QR on `AᵀS`), which is
/// only valid because the sketched system is assumed consistent.
pub fn project_sketch_oracle(x: &[f64], s: &Sketch, sys: &LinearSystem, g: &Geometry) -> Result<Vec<f64>> {
    let n = sys.cols();
    if x.len() != n {
        return Err(SketchError::dims("oracle iterate", n, x.len()));
    }
    let a = sys.a();
    let ats = s.at_s(a)?;
    let qr = PivotedQr::factor(&ats);
    if qr.rank == 0 {
        return Ok(x.to_vec());
    }
    let keep = &qr.permutation[..qr.rank];
    let stb = s.transpose_apply(a, sys.b())?;
    let bmat = g.dense();
    let bx = bmat.matvec(x);
    let dim = n + keep.len();
    let mut kkt = DenseMatrix::zeros(dim, dim);
    let mut rhs = vec![0.0; dim];
    for i in 0..n {
        kkt.row_mut(i)[..n].copy_from_slice(bmat.row(i));
        rhs[i] = bx[i];
    }
    for (p, &c) in keep.iter().enumerate() {
        for i in 0..n {
            kkt[(i, n + p)] = ats[(i, c)];
            kkt[(n + p, i)] = ats[(i, c)];
        }
        rhs[n + p] = stb[c];
    }
    let sol = lu_solve(&kkt, &rhs).map_err(|e| SketchError::OracleFailure(e.to_string()))?;
    Ok(sol[..n].to_vec())
}

/// `B⁻¹Z` with `Z = AᵀS (SᵀAB⁻¹AᵀS)† SᵀA`.
pub fn projection_matrix(s: &Sketch, sys: &LinearSystem, g: &Geometry) -> Result<DenseMatrix> {
    let ats = s.at_s(sys.a())?;
    let binv_ats = g.solve_matrix(&ats)?;
    let inner = ats.t_matmul(&binv_ats);
    let pinv = crate::linalg::pseudo_inverse_symmetric(&inner)?;
    Ok(binv_ats.matmul(&pinv).matmul(&ats.transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm2, rng_matrix};

    fn diag_sys() -> LinearSystem {
        LinearSystem::new(DenseMatrix::from_diag(&[1.0, 2.0]), vec![1.0, 2.0]).unwrap()
    }

    #[test]
    fn general_step_coordinate_example() {
        let sys = diag_sys();
        let mut st = IterateState::zeros(2);
        general_step(&mut st, &Sketch::Coords(vec![0]), &sys, &Geometry::identity(2)).unwrap();
        assert!((st.x[0] - 1.0).abs() < 1e-15 && st.x[1].abs() < 1e-15);
        assert_eq!(st.k, 1);
    }

    #[test]
    fn invertible_sketch_solves_in_one_step() {
        let a = rng_matrix(4, 4, 3);
        let xs = vec![1.0, -2.0, 0.5, 3.0];
        let sys = LinearSystem::new(a.clone(), a.matvec(&xs)).unwrap();
        let gb = rng_matrix(4, 4, 4);
        let g = Geometry::explicit_spd(gb.t_matmul(&gb).add(&DenseMatrix::identity(4))).unwrap();
        let s = Sketch::Dense(rng_matrix(4, 4, 5));
        let mut st = IterateState::zeros(4);
        general_step(&mut st, &s, &sys, &g).unwrap();
        assert!(norm2(&sys.residual(&st.x)) < 1e-10 * sys.rhs_norm());
        let first = st.x.clone();
        general_step(&mut st, &s, &sys, &g).unwrap();
        // both iterates sit on x* up to the conditioning of this 4x4 Gaussian A
        for x in [&first, &st.x] {
            assert!(x.iter().zip(&xs).all(|(u, v)| (u - v).abs() < 1e-8));
        }
    }

    #[test]
    fn zero_sketch_action_is_a_fixed_point() {
        // second row of A is zero, so S = e² gives Aᵀs = 0
        let sys = LinearSystem::new(DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0]]), vec![1.0, 0.0]).unwrap();
        let mut st = IterateState::new(vec![3.0, -1.0]);
        vector_sketch_step(&mut st, &[0.0, 1.0], &sys, &Geometry::identity(2)).unwrap();
        assert_eq!(st.x, vec![3.0, -1.0]);
        let out = project_sketch_oracle(&[3.0, -1.0], &Sketch::Coords(vec![1]), &sys, &Geometry::identity(2)).unwrap();
        assert_eq!(out, vec![3.0, -1.0]);
    }

    #[test]
    fn oracle_is_hyperplane_projection() {
        let sys = LinearSystem::new(DenseMatrix::from_rows(&[vec![3.0, 4.0], vec![1.0, 0.0]]), vec![5.0, 1.0]).unwrap();
        let x = [0.0, 0.0];
        let out = project_sketch_oracle(&x, &Sketch::Coords(vec![0]), &sys, &Geometry::identity(2)).unwrap();
        // nearest point on 3x + 4y = 5 to the origin
        assert!((out[0] - 0.6).abs() < 1e-14 && (out[1] - 0.8).abs() < 1e-14);
    }

    #[test]
    fn cd_pd_diagonal_example() {
        let sys = LinearSystem::new(DenseMatrix::from_diag(&[2.0, 4.0]), vec![2.0, 4.0]).unwrap();
        let mut st = IterateState::zeros(2);
        specialized_step(Method::CDpd, &mut st, &Sketch::Coords(vec![0]), &sys).unwrap();
        assert_eq!(st.x, vec![1.0, 0.0]);
    }

    #[test]
    fn block_rk_full_rows_and_newton_full_block() {
        let a = rng_matrix(3, 5, 8);
        let xs = rng_matrix(5, 1, 9).into_vec();
        let sys = LinearSystem::new(a.clone(), a.matvec(&xs)).unwrap();
        let mut st = IterateState::zeros(5);
        specialized_step(Method::BlockRK, &mut st, &Sketch::Coords(vec![0, 1, 2]), &sys).unwrap();
        assert!(norm2(&sys.residual(&st.x)) < 1e-12 * sys.rhs_norm());

        let g = rng_matrix(6, 6, 10);
        let spd = g.t_matmul(&g).add(&DenseMatrix::identity(6));
        let xs = rng_matrix(6, 1, 11).into_vec();
        let sys = LinearSystem::new(spd.clone(), spd.matvec(&xs)).unwrap();
        let mut st = IterateState::zeros(6);
        specialized_step(Method::RandNewton, &mut st, &Sketch::Coords((0..6).collect()), &sys).unwrap();
        assert!(st.x.iter().zip(&xs).all(|(u, v)| (u - v).abs() < 1e-10));
    }

    #[test]
    fn kernel_rejects_wrong_sketch_shape() {
        let sys = diag_sys();
        let mut st = IterateState::zeros(2);
        assert!(specialized_step(Method::CDls, &mut st, &Sketch::Coords(vec![0]), &sys).is_err());
        assert!(specialized_step(Method::RK, &mut st, &Sketch::Coords(vec![0, 1]), &sys).is_err());
        assert!(specialized_step(Method::General, &mut st, &Sketch::Coords(vec![0]), &sys).is_err());
    }

    #[test]
    fn residual_cache_survives_incremental_kernels() {
        let g = rng_matrix(5, 5, 20);
        let spd = g.t_matmul(&g).add(&DenseMatrix::identity(5));
        let sys = LinearSystem::new(spd, vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let mut st = IterateState::zeros(5);
        st.residual(&sys);
        let mut rng = crate::rng::seeded(1);
        for k in 0..20 {
            let s = Sketch::Coords(vec![k % 5]);
            specialized_step(Method::CDpd, &mut st, &s, &sys).unwrap();
            let eta = Sketch::Dense(crate::rng::gaussian_matrix(&mut rng, 5, 1));
            specialized_step(Method::GaussPd, &mut st, &eta, &sys).unwrap();
            let blk = Sketch::Dense(crate::rng::gaussian_matrix(&mut rng, 5, 2));
            specialized_step(Method::BlockGaussPd, &mut st, &blk, &sys).unwrap();
            specialized_step(Method::RandNewton, &mut st, &Sketch::Coords(vec![1, 3]), &sys).unwrap();
        }
        assert!(st.cached_residual().is_some());
        assert!(st.audit_residual(&sys) < 1e-8);
    }
}
