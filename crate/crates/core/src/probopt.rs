//! Sampling probabilities that maximize `λmin(Σ p_i P_i)` over the simplex.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SketchError};
use crate::linalg::dense::DenseMatrix;
use crate::linalg::eigen::{lambda_min_with_vector, spd_inverse_sqrt, symmetric_eigen};
use crate::linalg::{Geometry, GeometryForm, Matrix, PivotedQr};
use crate::sketch::Sketch;

/// `P_i = V_i(V_iᵀV_i)⁻¹V_iᵀ` with `V_i = B^{-1/2}AᵀS_i`.
#[derive(Clone, Debug)]
pub struct ProjectorBundle {
    pub projectors: Vec<DenseMatrix>,
    pub ranks: Vec<usize>,
    /// `‖V_i‖²_F = Tr(S_iᵀAB⁻¹AᵀS_i)`, the unnormalized convenient weights.
    pub weights: Vec<f64>,
}

pub fn build_projectors(samples: &[Sketch], a: &Matrix, g: &Geometry) -> Result<ProjectorBundle> {
    if samples.is_empty() {
        return Err(SketchError::InvalidParameter("projector bundle needs at least one sample".into()));
    }
    let root = match g.form() {
        GeometryForm::Identity => None,
        _ => Some(spd_inverse_sqrt(&g.dense())?),
    };
    let mut projectors = Vec::with_capacity(samples.len());
    let mut ranks = Vec::with_capacity(samples.len());
    let mut weights = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let ats = s.at_s(a)?;
        let v = match &root {
            None => ats,
            Some(r) => r.matmul(&ats),
        };
        let qr = PivotedQr::factor(&v);
        if qr.rank < s.width() || qr.rank == 0 {
            return Err(SketchError::RankDeficient(format!(
                "V_{i} has rank {} < {} columns",
                qr.rank,
                s.width()
            )));
        }
        projectors.push(qr.basis.matmul(&qr.basis.transpose()).symmetrized());
        ranks.push(qr.rank);
        weights.push(v.frobenius_norm().powi(2));
    }
    Ok(ProjectorBundle {
        projectors,
        ranks,
        weights,
    })
}

impl ProjectorBundle {
    pub fn len(&self) -> usize {
        self.projectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.projectors[0].rows()
    }

    pub fn uniform(&self) -> Vec<f64> {
        vec![1.0 / self.len() as f64; self.len()]
    }

    pub fn convenient(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }

    /// `Σ p_i P_i`
    pub fn combine(&self, p: &[f64]) -> DenseMatrix {
        let n = self.dim();
        let mut out = DenseMatrix::zeros(n, n);
        for (pi, proj) in p.iter().zip(&self.projectors) {
            if *pi != 0.0 {
                out.add_scaled_in_place(*pi, proj);
            }
        }
        out
    }

    /// `f(p) = λmin(Σ p_i P_i)`
    pub fn objective(&self, p: &[f64]) -> Result<f64> {
        Ok(lambda_min_with_vector(&self.combine(p))?.0)
    }

    /// `f(p)` and the supergradient `g_i = vᵀP_i v`.
    pub fn supergradient(&self, p: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (f, v) = lambda_min_with_vector(&self.combine(p))?;
        let g = self.projectors.iter().map(|proj| quad(proj, &v)).collect();
        Ok((f, g))
    }
}

fn quad(m: &DenseMatrix, v: &[f64]) -> f64 {
    crate::linalg::dot(&m.matvec(v), v)
}

/// Euclidean projection onto `{p ≥ 0, Σp = 1}` by active-set elimination.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut active: Vec<usize> = (0..v.len()).collect();
    let mut tau;
    loop {
        tau = (active.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / active.len() as f64;
        let before = active.len();
        active.retain(|&i| v[i] > tau);
        if active.len() == before {
            break;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub max_iters: usize,
    /// Stops once the certified gap falls below this.
    pub tol: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            max_iters: 5000,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub p_star: Vec<f64>,
    pub rho_star: f64,
    /// `f(p_star) = 1 − rho_star`
    pub f_star: f64,
    pub iterations: usize,
    /// Best upper bound on the optimum minus `f(p_star)`. Any density `X`
    /// (PSD, unit trace) gives `λmin(Σp_iP_i) ≤ max_i ⟨P_i, X⟩`; unit vectors
    /// `vvᵀ` and smoothed eigen-densities are both used.
    pub certified_gap: f64,
}

struct Ascent {
    best_p: Vec<f64>,
    best_f: f64,
    upper: f64,
    iterations: usize,
}

fn ascend(bundle: &ProjectorBundle, start: Vec<f64>, cfg: &OptConfig, upper: f64) -> Result<Ascent> {
    let mut p = project_to_simplex(&start);
    let (mut f, mut g) = bundle.supergradient(&p)?;
    let mut run = Ascent {
        best_p: p.clone(),
        best_f: f,
        upper: upper.min(g.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
        iterations: 0,
    };
    // Polyak step towards the moving target f_best + δ, with δ grown after
    // a hit and shrunk after a miss
    let mut delta = (0.5 * (run.upper - run.best_f)).max(cfg.tol);
    while run.iterations < cfg.max_iters && run.upper - run.best_f > cfg.tol {
        run.iterations += 1;
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        let tangent_sq: f64 = g.iter().map(|gi| (gi - mean) * (gi - mean)).sum();
        if tangent_sq <= f64::EPSILON * f64::EPSILON {
            // constant supergradient: p is optimal for this v
            run.upper = run.upper.min(f);
            break;
        }
        let target = run.best_f + delta;
        let alpha = (target - f).max(0.0) / tangent_sq;
        let next: Vec<f64> = p.iter().zip(&g).map(|(pi, gi)| pi + alpha * gi).collect();
        p = project_to_simplex(&next);
        let (fn_, gn) = bundle.supergradient(&p)?;
        f = fn_;
        g = gn;
        run.upper = run.upper.min(g.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        if f >= target {
            delta = (1.5 * delta).min((run.upper - run.best_f).max(cfg.tol));
        } else {
            delta = (0.7 * delta).max(1e-3 * cfg.tol);
        }
        if f > run.best_f {
            run.best_f = f;
            run.best_p = p.clone();
        }
    }
    Ok(run)
}

/// Steps per smoothing level in `smoothed_ascent`.
const SMOOTHING_STEPS: usize = 300;

/// `f_μ(p) = −μ ln Tr exp(−M/μ)` with `M = Σ p_i P_i`, its gradient
/// `⟨P_i, X_μ⟩` for the density `X_μ ∝ exp(−M/μ)`, and `λmin(M)`.
/// The gradient also bounds the optimum: `max_p f ≤ max_i ⟨P_i, X_μ⟩`.
fn smoothed(bundle: &ProjectorBundle, p: &[f64], mu: f64) -> Result<(f64, Vec<f64>)> {
    let e = symmetric_eigen(&bundle.combine(p))?;
    let lo = e.eigenvalues[0];
    let z: f64 = e.eigenvalues.iter().map(|l| (-(l - lo) / mu).exp()).sum();
    let x = e.reconstruct_with(|l| (-(l - lo) / mu).exp() / z);
    let g = bundle
        .projectors
        .iter()
        .map(|proj| proj.as_slice().iter().zip(x.as_slice()).map(|(a, b)| a * b).sum())
        .collect();
    Ok((lo, g))
}

/// Accelerated projected gradient on `f_μ` with `μ` shrinking geometrically,
/// which keeps making progress where the eigenvalue is multiple and
/// single-vector supergradients stall. Step `μ` matches the `1/μ`
/// smoothness of `f_μ` on the simplex.
fn smoothed_ascent(bundle: &ProjectorBundle, start: &[f64], cfg: &OptConfig, run: &mut Ascent) -> Result<()> {
    let mut p = project_to_simplex(start);
    let floor = (cfg.tol / (10.0 * (bundle.dim() as f64).ln().max(1.0))).max(1e-12);
    let mut mu = 0.1f64.min((run.upper - run.best_f).max(floor));
    let mut budget = cfg.max_iters;
    while budget > 0 && run.upper - run.best_f > cfg.tol {
        let mut y = p.clone();
        let mut t = 1.0f64;
        for _ in 0..SMOOTHING_STEPS.min(budget) {
            budget -= 1;
            run.iterations += 1;
            let (_, g) = smoothed(bundle, &y, mu)?;
            run.upper = run.upper.min(g.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
            let next = project_to_simplex(&y.iter().zip(&g).map(|(yi, gi)| yi + mu * gi).collect::<Vec<_>>());
            let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = next
                .iter()
                .zip(&p)
                .map(|(a, b)| a + (t - 1.0) / tn * (a - b))
                .collect();
            p = next;
            t = tn;
            let f = bundle.objective(&p)?;
            if f > run.best_f {
                run.best_f = f;
                run.best_p = p.clone();
            }
            if run.upper - run.best_f <= cfg.tol {
                return Ok(());
            }
        }
        if mu <= floor {
            break;
        }
        mu = (mu / 10f64.sqrt()).max(floor);
    }
    Ok(())
}

/// Projected supergradient ascent from the uniform and the convenient
/// distributions, then smoothed refinement from the better end point.
pub fn optimize_probabilities(bundle: &ProjectorBundle, cfg: &OptConfig) -> Result<OptimizationResult> {
    if bundle.is_empty() {
        return Err(SketchError::InvalidParameter("empty projector bundle".into()));
    }
    let mut upper = f64::INFINITY;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut iterations = 0;
    for start in [bundle.uniform(), bundle.convenient()] {
        let run = ascend(bundle, start, cfg, upper)?;
        iterations += run.iterations;
        upper = upper.min(run.upper);
        if best.as_ref().is_none_or(|(_, f)| run.best_f > *f) {
            best = Some((run.best_p, run.best_f));
        }
    }
    let (best_p, best_f) = best.unwrap();
    let mut run = Ascent {
        best_p,
        best_f,
        upper,
        iterations: 0,
    };
    if run.upper - run.best_f > cfg.tol {
        let start = run.best_p.clone();
        smoothed_ascent(bundle, &start, cfg, &mut run)?;
    }
    iterations += run.iterations;
    let (p_star, f_star, upper) = (run.best_p, run.best_f, run.upper);
    Ok(OptimizationResult {
        rho_star: 1.0 - f_star,
        certified_gap: (upper - f_star).max(0.0),
        p_star,
        f_star,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::row_sketches;

    fn sorting_projection(v: &[f64]) -> Vec<f64> {
        let mut u = v.to_vec();
        u.sort_by(|a, b| b.total_cmp(a));
        let mut cum = 0.0;
        let mut theta = 0.0;
        for (k, uk) in u.iter().enumerate() {
            cum += uk;
            let t = (cum - 1.0) / (k + 1) as f64;
            if uk - t > 0.0 {
                theta = t;
            }
        }
        v.iter().map(|x| (x - theta).max(0.0)).collect()
    }

    #[test]
    fn simplex_projection_matches_sorting_oracle() {
        let mut rng = crate::rng::seeded(3);
        for len in 1..8 {
            for _ in 0..50 {
                let v: Vec<f64> = crate::rng::gaussian_vec(&mut rng, len);
                let p = project_to_simplex(&v);
                let q = sorting_projection(&v);
                assert!(p.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-14));
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(p.iter().all(|x| *x >= 0.0));
            }
        }
    }

    #[test]
    fn coordinate_projectors() {
        let n = 4;
        let a = Matrix::Dense(DenseMatrix::identity(n));
        let b = build_projectors(&row_sketches(n), &a, &Geometry::identity(n)).unwrap();
        for (i, p) in b.projectors.iter().enumerate() {
            let mut e = DenseMatrix::zeros(n, n);
            e[(i, i)] = 1.0;
            assert!(p.sub(&e).max_abs() < 1e-15);
        }
        let r = optimize_probabilities(&b, &OptConfig::default()).unwrap();
        assert!((r.rho_star - 0.75).abs() < 1e-6);
        assert!(r.p_star.iter().all(|p| (p - 0.25).abs() < 1e-4));
    }

    #[test]
    fn row_scaling_cancels() {
        let a = Matrix::Dense(DenseMatrix::from_diag(&[1.0, 2.0]));
        let b = build_projectors(&row_sketches(2), &a, &Geometry::identity(2)).unwrap();
        assert!(b.projectors[1].sub(&DenseMatrix::from_diag(&[0.0, 1.0])).max_abs() < 1e-15);
        assert_eq!(b.ranks, vec![1, 1]);
        assert_eq!(b.convenient(), vec![0.2, 0.8]);
    }

    #[test]
    fn equal_projectors_keep_uniform() {
        let a = Matrix::Dense(DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![-1.0, -1.0]]));
        let b = build_projectors(&row_sketches(3), &a, &Geometry::identity(2)).unwrap();
        let r = optimize_probabilities(&b, &OptConfig::default()).unwrap();
        assert!((r.f_star - b.objective(&b.uniform()).unwrap()).abs() < 1e-12);
        assert!(r.certified_gap < 1e-6);
    }

    #[test]
    fn two_sample_bundles_match_grid_scan() {
        for seed in 0..20 {
            let a = Matrix::Dense(crate::linalg::rng_matrix(5, 4, 100 + seed));
            let samples = vec![Sketch::Coords(vec![0, 1]), Sketch::Coords(vec![2, 3, 4])];
            let b = build_projectors(&samples, &a, &Geometry::identity(4)).unwrap();
            let r = optimize_probabilities(&b, &OptConfig::default()).unwrap();
            let grid = (0..=10_000)
                .map(|k| {
                    let t = k as f64 * 1e-4;
                    b.objective(&[t, 1.0 - t]).unwrap()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((r.f_star - grid).abs() < 1e-3, "seed {seed}: {} vs {grid}", r.f_star);
            assert!(r.f_star + r.certified_gap >= grid - 1e-12);
        }
    }
}
