//! Turning method specs into a ready geometry and sketch law.

use crate::error::{Result, SketchError};
use crate::io::config::{MethodSpec, ProbChoice};
use crate::linalg::Geometry;
use crate::probopt::{build_projectors, optimize_probabilities, OptConfig, OptimizationResult};
use crate::rates::{rate_report, rho_convenient, McOptions, MAX_ENUMERATED_SUBSETS};
use crate::sketch::SketchDistribution;
use crate::solver::presets::method_defaults;
use crate::solver::{preset, LinearSystem, Method, PresetOptions, ProbScheme};

pub struct MethodSetup {
    pub geometry: Geometry,
    pub distribution: SketchDistribution,
    /// Present when the probabilities were optimized.
    pub optimization: Option<OptimizationResult>,
}

/// Rejects sampling or geometry overrides that contradict a named method.
pub fn check_overrides(spec: &MethodSpec) -> Result<()> {
    if spec.method == Method::General {
        return Ok(());
    }
    let (g, s) = method_defaults(spec.method);
    if spec.geometry.is_some_and(|x| x != g) {
        return Err(SketchError::InvalidParameter(format!(
            "method {} fixes its geometry; --b-geometry applies to --method general",
            spec.method.name()
        )));
    }
    if let Some(x) = &spec.sampling {
        if *x != s {
            return Err(SketchError::InvalidParameter(format!(
                "method {} fixes its sampling; --sampling applies to --method general",
                spec.method.name()
            )));
        }
    }
    Ok(())
}

pub fn setup_method(spec: &MethodSpec, sys: &LinearSystem, opt: &OptConfig) -> Result<MethodSetup> {
    check_overrides(spec)?;
    spec.method.check_compatible(sys)?;
    let probs = match &spec.probs {
        ProbChoice::Convenient | ProbChoice::Optimized => None,
        ProbChoice::Uniform => Some(ProbScheme::Uniform),
        ProbChoice::Explicit(p) => Some(ProbScheme::Explicit(p.clone())),
    };
    let opts = PresetOptions {
        block: spec.block_size,
        probs,
        uniform_blocks: spec.uniform_blocks,
        geometry: spec.geometry,
        sampling: spec.sampling.clone(),
    };
    let (geometry, distribution) = preset(spec.method, sys, &opts)?;
    if spec.probs != ProbChoice::Optimized {
        return Ok(MethodSetup {
            geometry,
            distribution,
            optimization: None,
        });
    }
    let discrete = match &distribution {
        SketchDistribution::Discrete(d) => d.clone(),
        SketchDistribution::Subsets(s) => s.to_discrete(MAX_ENUMERATED_SUBSETS)?,
        SketchDistribution::Gaussian(_) => {
            return Err(SketchError::InvalidParameter(
                "optimized probabilities need a discrete sampling".into(),
            ))
        }
    };
    let bundle = build_projectors(discrete.samples(), sys.a(), &geometry)?;
    let result = optimize_probabilities(&bundle, opt)?;
    let distribution = discrete.reweighted(result.p_star.clone())?.into();
    Ok(MethodSetup {
        geometry,
        distribution,
        optimization: Some(result),
    })
}

/// `ρ_c` for discrete laws (enumerating random subsets), otherwise the
/// rate itself, estimated by Monte Carlo for Gaussian laws.
pub fn theory_rate(dist: &SketchDistribution, sys: &LinearSystem, g: &Geometry, mc: McOptions) -> Result<f64> {
    match dist {
        SketchDistribution::Discrete(d) => rho_convenient(d.samples(), sys.a(), g),
        SketchDistribution::Subsets(s) => {
            rho_convenient(s.to_discrete(MAX_ENUMERATED_SUBSETS)?.samples(), sys.a(), g)
        }
        SketchDistribution::Gaussian(_) => Ok(rate_report(dist, sys.a(), g, 0.5, Some(mc))?.rho),
    }
}
