use serde::{Deserialize, Serialize};

use super::DecomposeError;

/// Knobs of the fit. Field names double as the config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Maximum number of convexes.
    pub budget: usize,
    /// Smooth-max sharpness over a convex's halfspaces (1/m).
    pub sharpness: f64,
    /// Gain of the sigmoid indicator (1/m).
    pub indicator_gain: f64,
    /// Offset of near-surface samples from the depth surface (m). Also the
    /// smallest seed half extent.
    pub surface_band: f64,
    pub near_surface_samples: usize,
    pub volume_samples: usize,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub iterations: usize,
    /// Convexes covering less than this fraction of inside samples on their
    /// own are dropped after polishing.
    pub prune_threshold: f64,
    pub overlap_weight: f64,
    pub volume_weight: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            budget: 24,
            sharpness: 75.0,
            indicator_gain: 75.0,
            surface_band: 0.05,
            near_surface_samples: 60_000,
            volume_samples: 60_000,
            step_size: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            iterations: 2000,
            prune_threshold: 0.002,
            overlap_weight: 0.01,
            volume_weight: 1e-4,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), DecomposeError> {
        let bad = |what: &str| Err(DecomposeError::Config(what.to_string()));
        if self.budget < 1 {
            return bad("budget must be at least 1");
        }
        let positive = [
            ("sharpness", self.sharpness),
            ("indicator_gain", self.indicator_gain),
            ("surface_band", self.surface_band),
            ("step_size", self.step_size),
            ("prune_threshold", self.prune_threshold),
            ("overlap_weight", self.overlap_weight),
            ("volume_weight", self.volume_weight),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(&format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if self.prune_threshold >= 1.0 {
            return bad("prune_threshold must be below 1");
        }
        if self.near_surface_samples + self.volume_samples == 0 {
            return bad("at least one sample is required");
        }
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        Ok(())
    }
}
