//! The `(B, S)` pairing behind each named method.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SketchError};
use crate::linalg::Geometry;
use crate::sketch::{
    column_sketches, convenient_probabilities, default_block_width, partition_blocks, row_sketches,
    DiscreteSampling, GaussianSampling, RandomSubsets, Sketch, SketchDistribution, SubsetTarget,
};
use crate::solver::state::Method;
use crate::solver::system::LinearSystem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryChoice {
    Identity,
    /// `B = A`
    A,
    /// `B = AᵀA`
    Ata,
}

impl std::str::FromStr for GeometryChoice {
    type Err = SketchError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "i" => Ok(GeometryChoice::Identity),
            "a" => Ok(GeometryChoice::A),
            "ata" => Ok(GeometryChoice::Ata),
            _ => Err(SketchError::InvalidParameter(format!("unknown geometry '{s}'"))),
        }
    }
}

pub fn build_geometry(choice: GeometryChoice, sys: &LinearSystem) -> Result<Geometry> {
    match choice {
        GeometryChoice::Identity => Ok(Geometry::identity(sys.cols())),
        GeometryChoice::A => {
            if sys.rows() != sys.cols() || !sys.is_symmetric() {
                return Err(SketchError::InvalidParameter(
                    "geometry B = A needs a symmetric positive definite A".into(),
                ));
            }
            Geometry::explicit_shared(sys.shared_a())
        }
        GeometryChoice::Ata => Ok(Geometry::gram_of_a(sys.shared_a())),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingKind {
    /// `S = e^i ∈ R^m`
    Rows,
    /// `S = A e^j`
    Columns,
    /// Fixed partition of the coordinates into blocks.
    BlocksPartition,
    /// Uniform random subsets of fixed size, drawn fresh each iteration.
    BlocksUniform,
    GaussianIdentity,
    /// `S = Aη`, `η ∼ N(0, I)`.
    GaussianAat,
    /// Explicit sketch matrices.
    #[serde(skip)]
    Custom(Vec<Sketch>),
}

impl std::str::FromStr for SamplingKind {
    type Err = SketchError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rows" => Ok(SamplingKind::Rows),
            "columns" => Ok(SamplingKind::Columns),
            "blocks" | "blocks-partition" => Ok(SamplingKind::BlocksPartition),
            "blocks-uniform" => Ok(SamplingKind::BlocksUniform),
            "gaussian" | "gaussian-identity" => Ok(SamplingKind::GaussianIdentity),
            "gaussian-aat" => Ok(SamplingKind::GaussianAat),
            _ => Err(SketchError::InvalidParameter(format!("unknown sampling '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbScheme {
    Uniform,
    Convenient,
    Explicit(Vec<f64>),
}

/// In configs: a number, `"full"` or `"default"`, as on the command line.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BlockSizeRepr", into = "BlockSizeRepr")]
pub enum BlockSize {
    /// `⌈√n⌉`
    #[default]
    Default,
    Full,
    Fixed(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BlockSizeRepr {
    Fixed(usize),
    Name(String),
}

impl TryFrom<BlockSizeRepr> for BlockSize {
    type Error = SketchError;
    fn try_from(r: BlockSizeRepr) -> Result<Self> {
        match r {
            BlockSizeRepr::Fixed(q) => q.to_string().parse(),
            BlockSizeRepr::Name(s) => s.parse(),
        }
    }
}

impl From<BlockSize> for BlockSizeRepr {
    fn from(b: BlockSize) -> Self {
        match b {
            BlockSize::Default => BlockSizeRepr::Name("default".into()),
            BlockSize::Full => BlockSizeRepr::Name("full".into()),
            BlockSize::Fixed(q) => BlockSizeRepr::Fixed(q),
        }
    }
}

impl BlockSize {
    pub fn resolve(self, n: usize, cap: usize) -> usize {
        let q = match self {
            BlockSize::Default => default_block_width(n),
            BlockSize::Full => cap,
            BlockSize::Fixed(q) => q,
        };
        q.clamp(1, cap.max(1))
    }
}

impl std::str::FromStr for BlockSize {
    type Err = SketchError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(BlockSize::Full),
            "default" => Ok(BlockSize::Default),
            _ => match s.parse::<usize>() {
                Ok(q) if q > 0 => Ok(BlockSize::Fixed(q)),
                _ => Err(SketchError::InvalidParameter(format!("invalid block size '{s}'"))),
            },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PresetOptions {
    pub block: BlockSize,
    /// `None` picks convenient probabilities for discrete laws.
    pub probs: Option<ProbScheme>,
    /// Draw blocks as fresh random subsets instead of a fixed partition.
    pub uniform_blocks: bool,
    /// Only read by `Method::General`.
    pub geometry: Option<GeometryChoice>,
    /// Only read by `Method::General`.
    pub sampling: Option<SamplingKind>,
}

/// The geometry and sketch law a method implies.
pub fn method_defaults(method: Method) -> (GeometryChoice, SamplingKind) {
    use GeometryChoice as G;
    use SamplingKind as S;
    match method {
        Method::General => (G::Identity, S::Rows),
        Method::RK => (G::Identity, S::Rows),
        Method::CDpd => (G::A, S::Rows),
        Method::CDls => (G::Ata, S::Columns),
        Method::BlockRK => (G::Identity, S::BlocksPartition),
        Method::RandNewton => (G::A, S::BlocksPartition),
        Method::GaussKaczmarz => (G::Identity, S::GaussianIdentity),
        Method::GaussLS => (G::Ata, S::GaussianAat),
        Method::GaussPd => (G::A, S::GaussianIdentity),
        Method::BlockGaussPd => (G::A, S::GaussianIdentity),
    }
}

/// Geometry and distribution for `method` on `sys`.
pub fn preset(method: Method, sys: &LinearSystem, opts: &PresetOptions) -> Result<(Geometry, SketchDistribution)> {
    let (mut gchoice, mut kind) = method_defaults(method);
    if method == Method::General {
        gchoice = opts.geometry.unwrap_or(gchoice);
        kind = opts.sampling.clone().unwrap_or(kind);
    }
    if kind == SamplingKind::BlocksPartition && opts.uniform_blocks {
        kind = SamplingKind::BlocksUniform;
    }
    let g = build_geometry(gchoice, sys)?;
    // block coordinate methods with B = A act on [n], block Kaczmarz on [m]
    let block_dim = if gchoice == GeometryChoice::Identity { sys.rows() } else { sys.cols() };
    let dist = match kind {
        SamplingKind::GaussianIdentity | SamplingKind::GaussianAat => {
            if opts.probs.is_some() {
                return Err(SketchError::InvalidParameter(
                    "probability schemes apply only to discrete samplings".into(),
                ));
            }
            let q = match method {
                Method::BlockGaussPd => opts.block.resolve(sys.cols(), sys.cols()),
                Method::General => match opts.block {
                    BlockSize::Default => 1,
                    b => b.resolve(sys.cols(), sys.rows()),
                },
                _ => 1,
            };
            if kind == SamplingKind::GaussianAat {
                GaussianSampling::pushforward_by_a(sys.cols(), q)?.into()
            } else {
                GaussianSampling::identity(sys.rows(), q)?.into()
            }
        }
        SamplingKind::BlocksUniform => {
            if matches!(opts.probs, Some(ProbScheme::Explicit(_))) {
                return Err(SketchError::InvalidParameter(
                    "random block subsets are always uniform".into(),
                ));
            }
            let q = opts.block.resolve(sys.cols(), block_dim);
            SketchDistribution::Subsets(RandomSubsets::new(block_dim, q, SubsetTarget::Coords)?)
        }
        other => {
            let samples = match other {
                SamplingKind::Rows => row_sketches(sys.rows()),
                SamplingKind::Columns => column_sketches(sys.cols()),
                SamplingKind::BlocksPartition => {
                    let q = opts.block.resolve(sys.cols(), block_dim);
                    partition_blocks(block_dim, q, SubsetTarget::Coords)?
                }
                SamplingKind::Custom(s) => s,
                _ => unreachable!(),
            };
            discrete(samples, sys, &g, opts.probs.as_ref())?.into()
        }
    };
    Ok((g, dist))
}

/// A discrete law over `samples` with the requested probabilities.
pub fn discrete(samples: Vec<Sketch>, sys: &LinearSystem, g: &Geometry, probs: Option<&ProbScheme>) -> Result<DiscreteSampling> {
    match probs.unwrap_or(&ProbScheme::Convenient) {
        ProbScheme::Uniform => DiscreteSampling::uniform(samples),
        ProbScheme::Convenient => {
            let p = convenient_probabilities(&samples, sys.a(), g)?;
            DiscreteSampling::new(samples, p)
        }
        ProbScheme::Explicit(p) => DiscreteSampling::on_support(samples, p.clone()),
    }
}
