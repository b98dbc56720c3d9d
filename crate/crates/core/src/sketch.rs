//! Random sketch matrices `S`: complete discrete samplings, random block
//! subsets and Gaussian laws.

use rand::seq::index;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::error::{Result, SketchError};
use crate::linalg::{rank, Cholesky, DenseMatrix, Geometry, Matrix};
use crate::rng::gaussian_matrix;

/// One realization of the sketch matrix `S ∈ R^{m×q}`.
#[derive(Clone, Debug, PartialEq)]
pub enum Sketch {
    /// `S = I_{:C}`, columns of the identity (row selection of `A`).
    Coords(Vec<usize>),
    /// Explicit `m × q` matrix.
    Dense(DenseMatrix),
    /// `S = A I_{:C}`, a selection of columns of `A`.
    ColumnsOfA(Vec<usize>),
    /// `S = A G` with `G` an `n × q` matrix, kept factored.
    PushforwardA(DenseMatrix),
}

impl Sketch {
    pub fn width(&self) -> usize {
        match self {
            Sketch::Coords(c) | Sketch::ColumnsOfA(c) => c.len(),
            Sketch::Dense(s) | Sketch::PushforwardA(s) => s.cols(),
        }
    }

    fn check(&self, a: &Matrix) -> Result<()> {
        let (m, n) = (a.rows(), a.cols());
        match self {
            Sketch::Coords(c) => match c.iter().find(|&&i| i >= m) {
                Some(&i) => Err(SketchError::dims("sketch row index", m, i)),
                None => Ok(()),
            },
            Sketch::ColumnsOfA(c) => match c.iter().find(|&&j| j >= n) {
                Some(&j) => Err(SketchError::dims("sketch column index", n, j)),
                None => Ok(()),
            },
            Sketch::Dense(s) if s.rows() != m => Err(SketchError::dims("sketch rows", m, s.rows())),
            Sketch::PushforwardA(g) if g.rows() != n => Err(SketchError::dims("pushforward rows", n, g.rows())),
            _ => Ok(()),
        }
    }

    /// `Sᵀ r` for `r ∈ R^m`.
    pub fn transpose_apply(&self, a: &Matrix, r: &[f64]) -> Result<Vec<f64>> {
        self.check(a)?;
        if r.len() != a.rows() {
            return Err(SketchError::dims("sketched residual", a.rows(), r.len()));
        }
        Ok(match self {
            Sketch::Coords(c) => c.iter().map(|&i| r[i]).collect(),
            Sketch::Dense(s) => s.matvec_t(r),
            Sketch::ColumnsOfA(c) => {
                let atr = a.matvec_t(r);
                c.iter().map(|&j| atr[j]).collect()
            }
            Sketch::PushforwardA(g) => g.matvec_t(&a.matvec_t(r)),
        })
    }

    /// `AᵀS`, an `n × q` matrix.
    pub fn at_s(&self, a: &Matrix) -> Result<DenseMatrix> {
        self.check(a)?;
        Ok(match self {
            Sketch::Coords(c) => a.select_rows_dense(c).transpose(),
            Sketch::Dense(s) => a.t_matmul_dense(s),
            Sketch::ColumnsOfA(c) => {
                let mut sel = DenseMatrix::zeros(a.cols(), c.len());
                for (k, &j) in c.iter().enumerate() {
                    sel[(j, k)] = 1.0;
                }
                a.t_matmul_dense(&a.matmul_dense(&sel))
            }
            Sketch::PushforwardA(g) => a.t_matmul_dense(&a.matmul_dense(g)),
        })
    }

    /// `S` as an explicit `m × q` matrix.
    pub fn to_dense(&self, a: &Matrix) -> Result<DenseMatrix> {
        self.check(a)?;
        let m = a.rows();
        Ok(match self {
            Sketch::Coords(c) => {
                let mut s = DenseMatrix::zeros(m, c.len());
                for (k, &i) in c.iter().enumerate() {
                    s[(i, k)] = 1.0;
                }
                s
            }
            Sketch::Dense(s) => s.clone(),
            Sketch::ColumnsOfA(c) => {
                let mut sel = DenseMatrix::zeros(a.cols(), c.len());
                for (k, &j) in c.iter().enumerate() {
                    sel[(j, k)] = 1.0;
                }
                a.matmul_dense(&sel)
            }
            Sketch::PushforwardA(g) => a.matmul_dense(g),
        })
    }
}

/// Finite-support law `S = S_i` with probability `p_i`.
#[derive(Clone, Debug)]
pub struct DiscreteSampling {
    samples: Vec<Sketch>,
    probs: Vec<f64>,
    alias: WeightedAliasIndex<f64>,
}

impl DiscreteSampling {
    pub fn new(samples: Vec<Sketch>, probs: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(SketchError::InvalidParameter("discrete sampling needs at least one sample".into()));
        }
        if samples.len() != probs.len() {
            return Err(SketchError::dims("sampling probabilities", samples.len(), probs.len()));
        }
        if let Some((index, _)) = samples.iter().enumerate().find(|(_, s)| s.width() == 0) {
            return Err(SketchError::InvalidSampling {
                index,
                reason: "empty sketch".into(),
            });
        }
        if let Some((index, p)) = probs.iter().enumerate().find(|(_, p)| !(**p > 0.0) || !p.is_finite()) {
            return Err(SketchError::InvalidSampling {
                index,
                reason: format!("probability {p} is not positive"),
            });
        }
        let total: f64 = probs.iter().sum();
        // summation error alone grows like r·ε
        let tol = 1e-12 + probs.len() as f64 * f64::EPSILON;
        if (total - 1.0).abs() > tol {
            return Err(SketchError::InvalidParameter(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        let alias = WeightedAliasIndex::new(probs.clone())
            .map_err(|e| SketchError::InvalidParameter(format!("alias table: {e}")))?;
        Ok(DiscreteSampling { samples, probs, alias })
    }

    pub fn uniform(samples: Vec<Sketch>) -> Result<Self> {
        let r = samples.len().max(1);
        Self::new(samples, vec![1.0 / r as f64; r])
    }

    /// Rescales nonnegative weights onto the simplex first.
    pub fn with_weights(samples: Vec<Sketch>, weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(SketchError::InvalidParameter("weights must have a positive sum".into()));
        }
        Self::new(samples, weights.iter().map(|w| w / total).collect())
    }

    pub fn samples(&self) -> &[Sketch] {
        &self.samples
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn draw_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.alias.sample(rng)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Sketch {
        self.samples[self.draw_index(rng)].clone()
    }

    /// Samples with probability exactly zero are dropped, leaving the same
    /// law on the remaining support. Negative entries are still rejected.
    pub fn on_support(samples: Vec<Sketch>, probs: Vec<f64>) -> Result<Self> {
        if samples.len() != probs.len() {
            return Err(SketchError::dims("sampling probabilities", samples.len(), probs.len()));
        }
        if probs.iter().all(|p| *p != 0.0) {
            return Self::new(samples, probs);
        }
        let (samples, probs): (Vec<_>, Vec<_>) = samples.into_iter().zip(probs).filter(|(_, p)| *p != 0.0).unzip();
        Self::new(samples, probs)
    }

    /// Same samples, new probabilities; zero entries drop their sample.
    pub fn reweighted(&self, probs: Vec<f64>) -> Result<Self> {
        Self::on_support(self.samples.clone(), probs)
    }
}

/// How random index subsets are turned into sketches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubsetTarget {
    Coords,
    ColumnsOfA,
}

/// Uniformly random subsets of `{0..dim}` of fixed size, without replacement.
#[derive(Clone, Debug)]
pub struct RandomSubsets {
    pub dim: usize,
    pub size: usize,
    pub target: SubsetTarget,
}

impl RandomSubsets {
    pub fn new(dim: usize, size: usize, target: SubsetTarget) -> Result<Self> {
        if size == 0 || size > dim {
            return Err(SketchError::InvalidParameter(format!(
                "subset size {size} must lie in 1..={dim}"
            )));
        }
        Ok(RandomSubsets { dim, size, target })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Sketch {
        let mut idx = index::sample(rng, self.dim, self.size).into_vec();
        idx.sort_unstable();
        match self.target {
            SubsetTarget::Coords => Sketch::Coords(idx),
            SubsetTarget::ColumnsOfA => Sketch::ColumnsOfA(idx),
        }
    }

    /// Enumerates every subset as an equiprobable discrete sampling, refusing
    /// when there are more than `limit` of them.
    pub fn to_discrete(&self, limit: usize) -> Result<DiscreteSampling> {
        let count = binomial(self.dim, self.size);
        if count > limit as u128 {
            return Err(SketchError::InvalidParameter(format!(
                "{count} subsets exceed the enumeration limit {limit}"
            )));
        }
        let mut samples = Vec::with_capacity(count as usize);
        let mut current: Vec<usize> = (0..self.size).collect();
        loop {
            samples.push(match self.target {
                SubsetTarget::Coords => Sketch::Coords(current.clone()),
                SubsetTarget::ColumnsOfA => Sketch::ColumnsOfA(current.clone()),
            });
            let mut i = self.size;
            while i > 0 && current[i - 1] == self.dim - self.size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            current[i - 1] += 1;
            for j in i..self.size {
                current[j] = current[j - 1] + 1;
            }
        }
        DiscreteSampling::uniform(samples)
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

#[derive(Clone, Debug)]
pub enum Covariance {
    Identity,
    Explicit { sigma: DenseMatrix, lower: DenseMatrix },
    /// `S = Aη` with `η ∼ N(0, I_n)`, i.e. `Σ = AAᵀ`.
    PushforwardByA,
}

/// Gaussian sketch law with `q` i.i.d. columns.
#[derive(Clone, Debug)]
pub struct GaussianSampling {
    covariance: Covariance,
    /// Length of each Gaussian column: `m` in general, `n` for the pushforward form.
    dim: usize,
    block: usize,
}

impl GaussianSampling {
    pub fn identity(dim: usize, block: usize) -> Result<Self> {
        Self::build(Covariance::Identity, dim, block)
    }

    pub fn explicit(sigma: DenseMatrix, block: usize) -> Result<Self> {
        let chol = Cholesky::factor(&sigma)?;
        let dim = sigma.rows();
        Self::build(
            Covariance::Explicit {
                sigma,
                lower: chol.lower().clone(),
            },
            dim,
            block,
        )
    }

    /// `S = Aη`; `n` is the column count of `A`.
    pub fn pushforward_by_a(n: usize, block: usize) -> Result<Self> {
        Self::build(Covariance::PushforwardByA, n, block)
    }

    fn build(covariance: Covariance, dim: usize, block: usize) -> Result<Self> {
        if block == 0 {
            return Err(SketchError::InvalidParameter("gaussian block width must be at least 1".into()));
        }
        Ok(GaussianSampling {
            covariance,
            dim,
            block,
        })
    }

    pub fn covariance(&self) -> &Covariance {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Sketch {
        let g = gaussian_matrix(rng, self.dim, self.block);
        match &self.covariance {
            Covariance::Identity => Sketch::Dense(g),
            Covariance::Explicit { lower, .. } => Sketch::Dense(lower.matmul(&g)),
            Covariance::PushforwardByA => Sketch::PushforwardA(g),
        }
    }

    /// `Σ` as a dense `m × m` matrix.
    pub fn sigma(&self, a: &Matrix) -> DenseMatrix {
        match &self.covariance {
            Covariance::Identity => DenseMatrix::identity(self.dim),
            Covariance::Explicit { sigma, .. } => sigma.clone(),
            Covariance::PushforwardByA => a.to_dense().gram_rows(),
        }
    }
}

/// Default Gaussian block width `⌈√n⌉`.
pub fn default_block_width(n: usize) -> usize {
    (n as f64).sqrt().ceil().max(1.0) as usize
}

/// Any law the solvers can draw from.
#[derive(Clone, Debug)]
pub enum SketchDistribution {
    Discrete(DiscreteSampling),
    Subsets(RandomSubsets),
    Gaussian(GaussianSampling),
}

impl SketchDistribution {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Sketch {
        match self {
            SketchDistribution::Discrete(d) => d.draw(rng),
            SketchDistribution::Subsets(s) => s.draw(rng),
            SketchDistribution::Gaussian(g) => g.draw(rng),
        }
    }

    pub fn as_discrete(&self) -> Option<&DiscreteSampling> {
        match self {
            SketchDistribution::Discrete(d) => Some(d),
            _ => None,
        }
    }
}

impl From<DiscreteSampling> for SketchDistribution {
    fn from(d: DiscreteSampling) -> Self {
        SketchDistribution::Discrete(d)
    }
}

impl From<GaussianSampling> for SketchDistribution {
    fn from(g: GaussianSampling) -> Self {
        SketchDistribution::Gaussian(g)
    }
}

/// Outcome of checking the complete-discrete-sampling conditions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplingValidation {
    pub is_complete: bool,
    /// 0-based index of the first sample whose `S_iᵀA` lacks full row rank.
    pub failing_index: Option<usize>,
    pub rank_of_concatenation: usize,
}

pub fn validate_complete(dist: &DiscreteSampling, a: &Matrix) -> Result<SamplingValidation> {
    let mut blocks = Vec::with_capacity(dist.len());
    let mut failing_index = None;
    for (i, s) in dist.samples().iter().enumerate() {
        let ats = s.at_s(a)?;
        if failing_index.is_none() && rank(&ats) < s.width() {
            failing_index = Some(i);
        }
        blocks.push(ats);
    }
    let concat = DenseMatrix::hcat(&blocks);
    let rank_of_concatenation = rank(&concat);
    Ok(SamplingValidation {
        is_complete: failing_index.is_none() && rank_of_concatenation == a.cols(),
        failing_index,
        rank_of_concatenation,
    })
}

/// `Tr(S_iᵀ A B⁻¹ Aᵀ S_i)` for one sample.
pub fn sketched_trace(s: &Sketch, a: &Matrix, g: &Geometry) -> Result<f64> {
    let ats = s.at_s(a)?;
    let solved = g.solve_matrix(&ats)?;
    Ok(ats
        .as_slice()
        .iter()
        .zip(solved.as_slice())
        .map(|(u, v)| u * v)
        .sum())
}

/// `p_i ∝ Tr(S_iᵀ A B⁻¹ Aᵀ S_i)`.
pub fn convenient_probabilities(samples: &[Sketch], a: &Matrix, g: &Geometry) -> Result<Vec<f64>> {
    let traces = samples
        .iter()
        .map(|s| sketched_trace(s, a, g))
        .collect::<Result<Vec<_>>>()?;
    let scale = traces.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    if let Some((index, _)) = traces
        .iter()
        .enumerate()
        .find(|(_, &t)| !(t > 1e-14 * scale) || scale == 0.0)
    {
        return Err(SketchError::InvalidSampling {
            index,
            reason: "S_iᵀA vanishes, so the convenient weight is zero".into(),
        });
    }
    let total: f64 = traces.iter().sum();
    Ok(traces.iter().map(|t| t / total).collect())
}

/// Row coordinate sketches `e^i ∈ R^m`.
pub fn row_sketches(m: usize) -> Vec<Sketch> {
    (0..m).map(|i| Sketch::Coords(vec![i])).collect()
}

/// Column-of-`A` sketches `A e^j`.
pub fn column_sketches(n: usize) -> Vec<Sketch> {
    (0..n).map(|j| Sketch::ColumnsOfA(vec![j])).collect()
}

/// Consecutive blocks of width `q` covering `0..dim`; the last block may be short.
pub fn partition_blocks(dim: usize, q: usize, target: SubsetTarget) -> Result<Vec<Sketch>> {
    if q == 0 || q > dim {
        return Err(SketchError::InvalidParameter(format!("block size {q} must lie in 1..={dim}")));
    }
    Ok((0..dim)
        .step_by(q)
        .map(|start| {
            let idx: Vec<usize> = (start..(start + q).min(dim)).collect();
            match target {
                SubsetTarget::Coords => Sketch::Coords(idx),
                SubsetTarget::ColumnsOfA => Sketch::ColumnsOfA(idx),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn diag(values: &[f64]) -> Matrix {
        Matrix::Dense(DenseMatrix::from_diag(values))
    }

    #[test]
    fn degenerate_distribution_always_returns_the_sample() {
        let d = DiscreteSampling::new(vec![Sketch::Coords(vec![1])], vec![1.0]).unwrap();
        let mut rng = seeded(1);
        for _ in 0..100 {
            assert_eq!(d.draw(&mut rng), Sketch::Coords(vec![1]));
        }
    }

    #[test]
    fn zero_probabilities_shrink_the_support() {
        let d = DiscreteSampling::on_support(row_sketches(3), vec![0.25, 0.0, 0.75]).unwrap();
        assert_eq!(d.samples(), &[Sketch::Coords(vec![0]), Sketch::Coords(vec![2])][..]);
        assert_eq!(d.probs(), &[0.25, 0.75]);
        assert!(DiscreteSampling::new(row_sketches(3), vec![0.25, 0.0, 0.75]).is_err());
        assert!(DiscreteSampling::on_support(row_sketches(2), vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn uniform_two_point_frequency() {
        let d = DiscreteSampling::uniform(row_sketches(2)).unwrap();
        let mut rng = seeded(42);
        let hits = (0..100_000).filter(|_| d.draw_index(&mut rng) == 0).count();
        let freq = hits as f64 / 1e5;
        assert!((0.49..=0.51).contains(&freq), "{freq}");
    }

    #[test]
    fn alias_draws_match_probabilities_within_three_sigma() {
        let probs = vec![0.1, 0.2, 0.3, 0.4];
        let d = DiscreteSampling::new(row_sketches(4), probs.clone()).unwrap();
        let mut rng = seeded(7);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[d.draw_index(&mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip(&probs) {
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - n as f64 * p).abs() <= 3.0 * sd);
        }
    }

    #[test]
    fn gaussian_identity_moments() {
        let g = GaussianSampling::identity(2, 1).unwrap();
        let mut rng = seeded(3);
        let n = 100_000;
        let mut mean = [0.0; 2];
        let mut cov = [[0.0; 2]; 2];
        for _ in 0..n {
            let Sketch::Dense(s) = g.draw(&mut rng) else { panic!() };
            let v = s.column(0);
            for i in 0..2 {
                mean[i] += v[i] / n as f64;
                for j in 0..2 {
                    cov[i][j] += v[i] * v[j] / n as f64;
                }
            }
        }
        assert!(mean.iter().all(|m| m.abs() <= 0.01), "{mean:?}");
        for i in 0..2 {
            for j in 0..2 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((cov[i][j] - target).abs() <= 0.02);
            }
        }
    }

    #[test]
    fn pushforward_covariance_matches_aat() {
        let a = Matrix::Dense(DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 2.0], vec![1.0, 1.0]]));
        let g = GaussianSampling::pushforward_by_a(2, 1).unwrap();
        let mut rng = seeded(5);
        let n = 100_000;
        let mut cov = DenseMatrix::zeros(3, 3);
        for _ in 0..n {
            let s = g.draw(&mut rng).to_dense(&a).unwrap();
            cov.add_scaled_in_place(1.0 / n as f64, &s.matmul(&s.transpose()));
        }
        let target = g.sigma(&a);
        let rel = cov.sub(&target).frobenius_norm() / target.frobenius_norm();
        assert!(rel < 0.05, "{rel}");
    }

    #[test]
    fn explicit_gaussian_is_reproducible() {
        let sigma = DenseMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]);
        let g = GaussianSampling::explicit(sigma, 2).unwrap();
        let a = g.draw(&mut seeded(9));
        let b = g.draw(&mut seeded(9));
        assert_eq!(a, b);
        assert_eq!(a.width(), 2);
    }

    #[test]
    fn completeness_examples() {
        let id = diag(&[1.0, 1.0, 1.0]);
        let d = DiscreteSampling::uniform(row_sketches(3)).unwrap();
        assert!(validate_complete(&d, &id).unwrap().is_complete);

        let zero_row = diag(&[1.0, 0.0]);
        let d = DiscreteSampling::uniform(row_sketches(2)).unwrap();
        let v = validate_complete(&d, &zero_row).unwrap();
        assert!(!v.is_complete);
        assert_eq!(v.failing_index, Some(1));

        let only_first = DiscreteSampling::uniform(vec![Sketch::Coords(vec![0])]).unwrap();
        let v = validate_complete(&only_first, &diag(&[1.0, 1.0])).unwrap();
        assert!(!v.is_complete);
        assert_eq!(v.failing_index, None);
        assert_eq!(v.rank_of_concatenation, 1);
    }

    #[test]
    fn convenient_probability_examples() {
        let a = diag(&[1.0, 2.0]);
        let p = convenient_probabilities(&row_sketches(2), &a, &Geometry::identity(2)).unwrap();
        assert!((p[0] - 0.2).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);

        let spd = DenseMatrix::from_rows(&[vec![4.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 1.0, 2.0]]);
        let g = Geometry::explicit_spd(spd.clone()).unwrap();
        let p = convenient_probabilities(&row_sketches(3), &Matrix::Dense(spd), &g).unwrap();
        for (pi, d) in p.iter().zip([4.0, 3.0, 2.0]) {
            assert!((pi - d / 9.0).abs() < 1e-12);
        }

        let zero_row = diag(&[1.0, 0.0]);
        assert!(convenient_probabilities(&row_sketches(2), &zero_row, &Geometry::identity(2)).is_err());
    }

    #[test]
    fn convenient_probabilities_are_scale_invariant() {
        let base = crate::linalg::rng_matrix(5, 3, 4);
        let samples = row_sketches(5);
        let g = Geometry::identity(3);
        let p = convenient_probabilities(&samples, &Matrix::Dense(base.clone()), &g).unwrap();
        for c in [-3.0, 0.25, 1e3] {
            let q = convenient_probabilities(&samples, &Matrix::Dense(base.scaled(c)), &g).unwrap();
            assert!(p.iter().zip(&q).all(|(x, y)| (x - y).abs() <= 1e-12));
        }
    }

    #[test]
    fn subset_enumeration() {
        let s = RandomSubsets::new(4, 2, SubsetTarget::Coords).unwrap();
        let d = s.to_discrete(100).unwrap();
        assert_eq!(d.len(), 6);
        assert_eq!(d.samples()[5], Sketch::Coords(vec![2, 3]));
        assert!(s.to_discrete(5).is_err());
        let drawn = s.draw(&mut seeded(1));
        assert_eq!(drawn.width(), 2);
    }

    #[test]
    fn partition_covers_everything() {
        let blocks = partition_blocks(7, 3, SubsetTarget::Coords).unwrap();
        assert_eq!(blocks.len(), 3);
        assert_eq!(blocks[2], Sketch::Coords(vec![6]));
    }

    #[test]
    fn sketch_products_match_dense_forms() {
        let a = Matrix::Dense(crate::linalg::rng_matrix(4, 3, 8));
        let r = [1.0, -1.0, 2.0, 0.5];
        for s in [
            Sketch::Coords(vec![0, 2]),
            Sketch::ColumnsOfA(vec![1]),
            Sketch::PushforwardA(crate::linalg::rng_matrix(3, 2, 1)),
            Sketch::Dense(crate::linalg::rng_matrix(4, 2, 2)),
        ] {
            let dense = s.to_dense(&a).unwrap();
            let st_r = s.transpose_apply(&a, &r).unwrap();
            let expect = dense.matvec_t(&r);
            assert!(st_r.iter().zip(&expect).all(|(x, y)| (x - y).abs() < 1e-12));
            let ats = s.at_s(&a).unwrap();
            let expect = a.to_dense().t_matmul(&dense);
            assert!(ats.sub(&expect).max_abs() < 1e-12);
        }
    }
}
