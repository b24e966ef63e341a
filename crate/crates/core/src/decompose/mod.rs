//! Fitting a budget of convex primitives to a depth map.
//!
//! The depth map is treated as a solid: everything behind the visible surface
//! and in front of a back plane, inside the camera frustum, is "inside".
//! Labeled samples of that solid drive a gradient-based polish of halfspace
//! parameters under a smooth occupancy model, after which convexes that cover
//! (almost) no inside samples on their own are pruned.
//!
//! Pipeline: [`sample_labels`] → [`seed_primitives`] → [`polish`], composed
//! by [`decompose`].

mod config;
mod loss;
mod occupancy;
mod polish;
mod sampling;
mod seeding;

pub use config::FitConfig;
pub use loss::{fit_loss, loss_and_gradient, ConvexParams, LossTerms};
pub use occupancy::{smooth_occupancy, union_occupancy};
pub use polish::{polish, split_holdout, ConvexCoverage, FitReport};
pub use sampling::{sample_labels, solid_label, LabeledSample, BACK_MARGIN};
pub use seeding::seed_primitives;

use thiserror::Error;

use crate::camera::Camera;
use crate::primitive::ConvexPrimitive;
use crate::raster::DepthMap;
use crate::scene::{Scene, SceneError};

#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error("depth map has no finite pixels")]
    EmptyDepth,
    #[error("depth raster {depth_w}x{depth_h} does not match camera {cam_w}x{cam_h}")]
    DimensionMismatch {
        depth_w: u32,
        depth_h: u32,
        cam_w: u32,
        cam_h: u32,
    },
    #[error("invalid fit configuration: {0}")]
    Config(String),
    #[error("no samples to fit")]
    NoSamples,
    #[error("no inside-labeled samples to seed from")]
    NoInsideSamples,
    #[error("optimization diverged at iteration {iteration}")]
    Diverged {
        iteration: usize,
        primitives: Vec<ConvexPrimitive>,
        report: Box<FitReport>,
    },
    #[error(transparent)]
    Scene(#[from] SceneError),
}

impl DecomposeError {
    pub fn code(&self) -> &'static str {
        match self {
            DecomposeError::EmptyDepth => "decomposer.empty_depth",
            DecomposeError::DimensionMismatch { .. } => "decomposer.dimension_mismatch",
            DecomposeError::Config(_) => "decomposer.config",
            DecomposeError::NoSamples => "decomposer.no_samples",
            DecomposeError::NoInsideSamples => "decomposer.no_inside_samples",
            DecomposeError::Diverged { .. } => "decomposer.diverged",
            DecomposeError::Scene(e) => e.code(),
        }
    }
}

/// Full pipeline from a depth map to a scene of primitives.
///
/// Deterministic for a fixed `(depth, camera, cfg, rng_seed)`.
pub fn decompose(
    depth: &DepthMap,
    camera: &Camera,
    cfg: &FitConfig,
    rng_seed: u64,
) -> Result<(Scene, FitReport), DecomposeError> {
    cfg.validate()?;
    let samples = sample_labels(depth, camera, cfg, rng_seed)?;
    let (train, _) = split_holdout(&samples, rng_seed);
    let seeds = seed_primitives(&train, cfg.budget, cfg.surface_band, rng_seed)?;
    let (primitives, report) = polish(&seeds, &samples, cfg, rng_seed)?;
    let scene = Scene::with_budget(primitives, *camera, "", rng_seed, cfg.budget.max(crate::DEFAULT_BUDGET))?;
    Ok((scene, report))
}
