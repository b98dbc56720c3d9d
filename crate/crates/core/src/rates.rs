//! Convergence rates: `E[Z]`, the exact rate `ρ`, the convenient rate,
//! lower bounds, Gaussian brackets and Monte Carlo estimates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SketchError};
use crate::linalg::dense::{dot, DenseMatrix};
use crate::linalg::eigen::{lambda_extreme, symmetric_eigen};
use crate::linalg::{rank, spd_inverse_sqrt_conjugate, Cholesky, Geometry, Matrix, PivotedQr};
use crate::rng::{child, gaussian_matrix};
use crate::sketch::{validate_complete, DiscreteSampling, GaussianSampling, Sketch, SketchDistribution};

/// Largest support enumerated when turning random subsets into a discrete law.
pub const MAX_ENUMERATED_SUBSETS: usize = 20_000;

const MC_CHUNK: usize = 1 << 14;

#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    ExactDiscrete,
    /// Per-entry `3σ/√N` halfwidths of the estimate.
    MonteCarlo { samples: usize, halfwidth: DenseMatrix },
}

/// `E[Z]`, or for Monte Carlo estimates of Gaussian laws the already
/// conjugated `B^{-1/2} E[Z] B^{-1/2}` (see [`ExpectedZ::conjugated`]).
#[derive(Clone, Debug, PartialEq)]
pub struct ExpectedZ {
    pub matrix: DenseMatrix,
    pub provenance: Provenance,
    /// True when `matrix` is `B^{-1/2}E[Z]B^{-1/2}` rather than `E[Z]`.
    pub conjugated: bool,
}

impl ExpectedZ {
    /// Frobenius norm of the halfwidth matrix, a Weyl-type bound on how far
    /// any eigenvalue of the estimate can sit from the truth at `3σ`.
    pub fn spectral_halfwidth(&self) -> f64 {
        match &self.provenance {
            Provenance::ExactDiscrete => 0.0,
            Provenance::MonteCarlo { halfwidth, .. } => halfwidth.frobenius_norm(),
        }
    }

    /// `B^{-1/2} E[Z] B^{-1/2}`
    pub fn conjugated(&self, g: &Geometry) -> Result<DenseMatrix> {
        if self.conjugated {
            Ok(self.matrix.clone())
        } else {
            spd_inverse_sqrt_conjugate(&self.matrix, g)
        }
    }
}

fn inner_factor(ats: &DenseMatrix, g: &Geometry, index: usize) -> Result<Cholesky> {
    let binv = g.solve_matrix(ats)?;
    let inner = ats.t_matmul(&binv).symmetrized();
    Cholesky::factor(&inner).map_err(|_| SketchError::InvalidSampling {
        index,
        reason: "SᵀAB⁻¹AᵀS is singular".into(),
    })
}

/// `Z_i = AᵀS_i (S_iᵀAB⁻¹AᵀS_i)⁻¹ S_iᵀA` for one sample.
pub fn z_matrix(s: &Sketch, a: &Matrix, g: &Geometry, index: usize) -> Result<DenseMatrix> {
    let ats = s.at_s(a)?;
    let chol = inner_factor(&ats, g, index)?;
    let right = chol.solve_matrix(&ats.transpose());
    Ok(ats.matmul(&right).symmetrized())
}

/// `E[Z] = Σ p_i Z_i`, assembled term by term.
pub fn expected_z_discrete(dist: &DiscreteSampling, a: &Matrix, g: &Geometry) -> Result<ExpectedZ> {
    let n = a.cols();
    if g.dim() != n {
        return Err(SketchError::dims("geometry", n, g.dim()));
    }
    let mut ez = DenseMatrix::zeros(n, n);
    for (i, (s, &p)) in dist.samples().iter().zip(dist.probs()).enumerate() {
        ez.add_scaled_in_place(p, &z_matrix(s, a, g, i)?);
    }
    Ok(ExpectedZ {
        matrix: ez.symmetrized(),
        provenance: Provenance::ExactDiscrete,
        conjugated: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhoExact {
    pub rho: f64,
    pub lambda_min: f64,
    pub ez_positive_definite: bool,
}

/// `ρ = 1 − λmin(B^{-1/2} E[Z] B^{-1/2})`, clamped into `[0, 1]`.
pub fn rho_exact(ez: &ExpectedZ, g: &Geometry) -> Result<RhoExact> {
    let w = ez.conjugated(g)?;
    let e = symmetric_eigen(&w)?;
    let lambda_min = e.eigenvalues[0];
    let tol = e.rank_tolerance().max(ez.spectral_halfwidth());
    Ok(RhoExact {
        rho: (1.0 - lambda_min).clamp(0.0, 1.0),
        lambda_min,
        ez_positive_definite: lambda_min > tol,
    })
}

/// Same rate through the Cholesky factor, `1 − λmin(L⁻¹ E[Z] L⁻ᵀ)`.
pub fn rho_via_cholesky(ez: &ExpectedZ, g: &Geometry) -> Result<f64> {
    if ez.conjugated {
        return Ok(1.0 - lambda_extreme(&ez.matrix)?.0);
    }
    let m = match g.factor()? {
        None => ez.matrix.clone(),
        Some(c) => c.congruence(&ez.matrix),
    };
    Ok(1.0 - lambda_extreme(&m)?.0)
}

/// `ρ_c = 1 − λmin(W Wᵀ)/‖W‖²_F` with `W = B^{-1/2}Aᵀ[S_1 … S_r]`.
///
/// The eigenvalue is taken on the `n × n` side `WWᵀ`; the `(Σq_i)`-sized
/// Gram matrix `WᵀW` shares its nonzero spectrum but is singular whenever
/// the samples outnumber `n`.
pub fn rho_convenient(samples: &[Sketch], a: &Matrix, g: &Geometry) -> Result<f64> {
    let blocks = samples.iter().map(|s| s.at_s(a)).collect::<Result<Vec<_>>>()?;
    let cat = DenseMatrix::hcat(&blocks);
    let frob_sq: f64 = dot(cat.as_slice(), g.solve_matrix(&cat)?.as_slice());
    let w = spd_inverse_sqrt_conjugate(&cat.matmul(&cat.transpose()), g)?;
    let e = symmetric_eigen(&w)?;
    let lmin = e.eigenvalues[0];
    if !(lmin > e.rank_tolerance()) {
        return Err(SketchError::RankDeficient(format!(
            "Aᵀ[S_1 … S_r] has rank below {} (λmin = {lmin:.3e})",
            a.cols()
        )));
    }
    Ok(1.0 - lmin / frob_sq)
}

/// `E[d] = E[rank(SᵀA)]`.
pub fn expected_sketch_rank(dist: &SketchDistribution, a: &Matrix) -> Result<f64> {
    match dist {
        SketchDistribution::Discrete(d) => discrete_expected_rank(d, a),
        SketchDistribution::Subsets(s) => discrete_expected_rank(&s.to_discrete(MAX_ENUMERATED_SUBSETS)?, a),
        SketchDistribution::Gaussian(gs) => Ok(gs.block().min(gaussian_rank(gs, a)) as f64),
    }
}

fn discrete_expected_rank(d: &DiscreteSampling, a: &Matrix) -> Result<f64> {
    let mut total = 0.0;
    for (s, &p) in d.samples().iter().zip(d.probs()) {
        total += p * rank(&s.at_s(a)?) as f64;
    }
    Ok(total)
}

/// Rank of `AᵀΣA`, which a Gaussian `SᵀA` attains almost surely once `q` is large enough.
fn gaussian_rank(gs: &GaussianSampling, a: &Matrix) -> usize {
    let ad = a.to_dense();
    match gs.covariance() {
        crate::sketch::Covariance::PushforwardByA => rank(&ad.t_matmul(&ad)),
        _ => rank(&a.t_matmul_dense(&gs.sigma(a).matmul(&ad))),
    }
}

/// `1 − E[d]/n`
pub fn rho_lower_bound(dist: &SketchDistribution, a: &Matrix) -> Result<f64> {
    Ok(1.0 - expected_sketch_rank(dist, a)? / a.cols() as f64)
}

/// `Ω = B^{-1/2} AᵀΣA B^{-1/2}` for a Gaussian law on `S`.
pub fn gaussian_omega(gs: &GaussianSampling, a: &Matrix, g: &Geometry) -> Result<DenseMatrix> {
    let ad = a.to_dense();
    let atsa = match gs.covariance() {
        crate::sketch::Covariance::PushforwardByA => {
            let ata = ad.t_matmul(&ad);
            ata.matmul(&ata)
        }
        _ => {
            if gs.dim() != a.rows() {
                return Err(SketchError::dims("gaussian dimension", a.rows(), gs.dim()));
            }
            a.t_matmul_dense(&gs.sigma(a).matmul(&ad))
        }
    };
    spd_inverse_sqrt_conjugate(&atsa.symmetrized(), g)
}

/// `(1 − 1/n, 1 − (2/π) λmin(Ω)/Tr(Ω))` for vector Gaussian sketches.
pub fn gaussian_rho_bounds(gs: &GaussianSampling, a: &Matrix, g: &Geometry) -> Result<(f64, f64)> {
    if gs.block() != 1 {
        return Err(SketchError::InvalidParameter(format!(
            "the Gaussian bracket needs q = 1, got q = {}",
            gs.block()
        )));
    }
    omega_bounds(&gaussian_omega(gs, a, g)?)
}

pub fn omega_bounds(omega: &DenseMatrix) -> Result<(f64, f64)> {
    let e = symmetric_eigen(omega)?;
    let lmin = e.eigenvalues[0];
    if !(lmin > e.rank_tolerance()) {
        return Err(SketchError::RankDeficient(format!("Ω is singular (λmin = {lmin:.3e})")));
    }
    let n = omega.rows() as f64;
    Ok((
        1.0 - 1.0 / n,
        1.0 - (2.0 / std::f64::consts::PI) * lmin / omega.trace(),
    ))
}

struct ChunkSums {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

/// Monte Carlo estimate of `E[Π]` where `Π` projects onto the span of `q`
/// i.i.d. `N(0, Ω)` columns (`q = 1` gives `E[ξξᵀ/ξᵀξ]`).
///
/// Work is split into fixed-size chunks with their own child streams and
/// summed in chunk order, so the result does not depend on the thread count.
pub fn expected_gaussian_block_projection_mc(omega: &DenseMatrix, q: usize, samples: usize, seed: u64) -> Result<ExpectedZ> {
    let n = omega.rows();
    if samples < 2 {
        return Err(SketchError::InvalidParameter("Monte Carlo needs at least 2 samples".into()));
    }
    if q == 0 || q > n {
        return Err(SketchError::InvalidParameter(format!("block width {q} must lie in 1..={n}")));
    }
    let lower = Cholesky::factor(&omega.symmetrized())?.lower().clone();
    let chunks = samples.div_ceil(MC_CHUNK);
    let partial: Vec<ChunkSums> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut rng = child(seed, c as u64);
            let mut sum = vec![0.0; n * n];
            let mut sum_sq = vec![0.0; n * n];
            let mut proj = vec![0.0; n * n];
            for _ in 0..count {
                let v = lower.matmul(&gaussian_matrix(&mut rng, n, q));
                if q == 1 {
                    let xi = v.as_slice();
                    let nn = dot(xi, xi);
                    for i in 0..n {
                        for j in 0..n {
                            proj[i * n + j] = xi[i] * xi[j] / nn;
                        }
                    }
                } else {
                    let basis = PivotedQr::factor(&v).basis;
                    let p = basis.matmul(&basis.transpose());
                    proj.copy_from_slice(p.as_slice());
                }
                for ((s, s2), p) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(&proj) {
                    *s += p;
                    *s2 += p * p;
                }
            }
            ChunkSums { sum, sum_sq }
        })
        .collect();
    let mut sum = vec![0.0; n * n];
    let mut sum_sq = vec![0.0; n * n];
    for part in &partial {
        for k in 0..n * n {
            sum[k] += part.sum[k];
            sum_sq[k] += part.sum_sq[k];
        }
    }
    let nf = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let half: Vec<f64> = sum_sq
        .iter()
        .zip(&mean)
        .map(|(s2, m)| {
            let var = ((s2 / nf - m * m) * nf / (nf - 1.0)).max(0.0);
            3.0 * (var / nf).sqrt()
        })
        .collect();
    Ok(ExpectedZ {
        matrix: DenseMatrix::from_row_major(n, n, mean)?.symmetrized(),
        provenance: Provenance::MonteCarlo {
            samples,
            halfwidth: DenseMatrix::from_row_major(n, n, half)?,
        },
        conjugated: true,
    })
}

/// Monte Carlo estimate of `E[ξξᵀ/ξᵀξ]`, `ξ ∼ N(0, Ω)`.
pub fn expected_gaussian_projection_mc(omega: &DenseMatrix, samples: usize, seed: u64) -> Result<ExpectedZ> {
    expected_gaussian_block_projection_mc(omega, 1, samples, seed)
}

/// `Ω^{1/2}/Tr(Ω^{1/2})` for a `2 × 2` SPD `Ω`.
pub fn expected_gaussian_projection_2d(omega: &DenseMatrix) -> Result<DenseMatrix> {
    if omega.rows() != 2 || omega.cols() != 2 {
        return Err(SketchError::dims("2x2 covariance", 2, omega.rows()));
    }
    omega.ensure_symmetric(crate::linalg::eigen::SYMMETRY_TOL)?;
    let (a, b, d) = (omega[(0, 0)], omega[(0, 1)], omega[(1, 1)]);
    let det = a * d - b * b;
    if !(a > 0.0 && det > 0.0) {
        return Err(SketchError::NotPositiveDefinite {
            index: if a > 0.0 { 1 } else { 0 },
            pivot: if a > 0.0 { det / a } else { a },
        });
    }
    // √M = (M + √det·I)/√(tr M + 2√det) for 2x2 SPD M
    let s = det.sqrt();
    let t = (a + d + 2.0 * s).sqrt();
    let root = DenseMatrix::from_rows(&[vec![(a + s) / t, b / t], vec![b / t, (d + s) / t]]);
    let tr = root.trace();
    Ok(root.scaled(1.0 / tr))
}

/// `(I − B⁻¹E[Z])^k (x⁰ − x*)` for `k = 0..=horizon`.
pub fn fixed_point_trajectory(ez: &ExpectedZ, g: &Geometry, x0: &[f64], xstar: &[f64], horizon: usize) -> Result<Vec<Vec<f64>>> {
    if ez.conjugated {
        return Err(SketchError::InvalidParameter("trajectory needs E[Z] itself, not its conjugate".into()));
    }
    let n = ez.matrix.rows();
    if x0.len() != n || xstar.len() != n {
        return Err(SketchError::dims("trajectory start", n, x0.len().min(xstar.len())));
    }
    let mut e: Vec<f64> = x0.iter().zip(xstar).map(|(u, v)| u - v).collect();
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(e.clone());
    for _ in 0..horizon {
        let step = g.solve(&ez.matrix.matvec(&e))?;
        for (ei, si) in e.iter_mut().zip(&step) {
            *ei -= si;
        }
        out.push(e.clone());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceDecomposition {
    /// `‖x̄ − x*‖²_B`
    pub norm_sq_of_expected_error: f64,
    /// `mean ‖x_t − x*‖²_B`
    pub expected_sq_error: f64,
    /// `mean ‖x_t − x̄‖²_B`
    pub expected_sq_deviation: f64,
    /// `|first − (second − third)|`
    pub identity_residual: f64,
}

/// The three terms of `‖E[x − x*]‖² = E‖x − x*‖² − E‖x − E x‖²` on the
/// empirical measure of `samples` (normalized by `1/T`, so it is exact).
pub fn variance_decomposition(samples: &[Vec<f64>], xstar: &[f64], g: &Geometry) -> Result<VarianceDecomposition> {
    if samples.len() < 2 {
        return Err(SketchError::Statistics(format!(
            "variance decomposition needs at least 2 trials, got {}",
            samples.len()
        )));
    }
    let n = xstar.len();
    let t = samples.len() as f64;
    let mut mean = vec![0.0; n];
    for x in samples {
        if x.len() != n {
            return Err(SketchError::dims("trial iterate", n, x.len()));
        }
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / t;
        }
    }
    let sq = |u: &[f64], v: &[f64]| -> Result<f64> {
        let d: Vec<f64> = u.iter().zip(v).map(|(p, q)| p - q).collect();
        g.inner(&d, &d)
    };
    let first = sq(&mean, xstar)?;
    let mut second = 0.0;
    let mut third = 0.0;
    for x in samples {
        second += sq(x, xstar)? / t;
        third += sq(x, &mean)? / t;
    }
    Ok(VarianceDecomposition {
        norm_sq_of_expected_error: first,
        expected_sq_error: second,
        expected_sq_deviation: third,
        identity_residual: (first - (second - third)).abs(),
    })
}

/// `⌈ln(1/ε)/(1 − ρ)⌉`; `None` when `ρ ≥ 1`.
pub fn iteration_complexity(rho: f64, epsilon: f64) -> Option<u64> {
    if rho >= 1.0 || !(epsilon > 0.0 && epsilon < 1.0) {
        return None;
    }
    Some(((1.0 / epsilon).ln() / (1.0 - rho)).ceil() as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloInfo {
    pub samples: usize,
    pub rho_halfwidth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub rho: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_convenient: Option<f64>,
    pub rho_lower_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_optimized: Option<f64>,
    pub ez_pd: bool,
    pub iteration_complexity: Option<u64>,
    pub epsilon: f64,
    /// Analytic bracket for vector Gaussian sketches.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gaussian_bracket: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloInfo>,
    /// Ascending spectrum of `B^{-1/2}E[Z]B^{-1/2}`.
    pub ez_spectrum: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McOptions {
    pub samples: usize,
    pub seed: u64,
}

/// Full rate analysis of `dist`. Gaussian laws need `mc`.
pub fn rate_report(dist: &SketchDistribution, a: &Matrix, g: &Geometry, epsilon: f64, mc: Option<McOptions>) -> Result<RateReport> {
    let lower = rho_lower_bound(dist, a)?;
    let (ez, rho_c, bracket) = match dist {
        SketchDistribution::Gaussian(gs) => {
            let mc = mc.ok_or_else(|| {
                SketchError::InvalidParameter("Gaussian rates need a Monte Carlo sample count".into())
            })?;
            let omega = gaussian_omega(gs, a, g)?;
            let bracket = if gs.block() == 1 { Some(omega_bounds(&omega)?) } else { None };
            let ez = expected_gaussian_block_projection_mc(&omega, gs.block(), mc.samples, mc.seed)?;
            (ez, None, bracket)
        }
        SketchDistribution::Discrete(d) => discrete_parts(d, a, g)?,
        SketchDistribution::Subsets(s) => discrete_parts(&s.to_discrete(MAX_ENUMERATED_SUBSETS)?, a, g)?,
    };
    let exact = rho_exact(&ez, g)?;
    let spectrum = symmetric_eigen(&ez.conjugated(g)?)?.eigenvalues;
    let monte_carlo = match &ez.provenance {
        Provenance::MonteCarlo { samples, .. } => Some(MonteCarloInfo {
            samples: *samples,
            rho_halfwidth: ez.spectral_halfwidth(),
        }),
        Provenance::ExactDiscrete => None,
    };
    Ok(RateReport {
        rho: exact.rho,
        rho_convenient: rho_c,
        rho_lower_bound: lower,
        rho_optimized: None,
        ez_pd: exact.ez_positive_definite,
        iteration_complexity: iteration_complexity(exact.rho, epsilon),
        epsilon,
        gaussian_bracket: bracket,
        monte_carlo,
        ez_spectrum: spectrum,
    })
}

type DiscreteParts = (ExpectedZ, Option<f64>, Option<(f64, f64)>);

fn discrete_parts(d: &DiscreteSampling, a: &Matrix, g: &Geometry) -> Result<DiscreteParts> {
    let v = validate_complete(d, a)?;
    if !v.is_complete {
        return Err(SketchError::IncompleteSampling {
            failing_index: v.failing_index,
            rank: v.rank_of_concatenation,
            needed: a.cols(),
        });
    }
    let ez = expected_z_discrete(d, a, g)?;
    let rho_c = rho_convenient(d.samples(), a, g)?;
    Ok((ez, Some(rho_c), None))
}
