//! Labeled occupancy samples from a depth map.
//!
//! The solid is the set of points whose camera-frame z lies between the
//! surface depth of their pixel and a back plane `BACK_MARGIN` beyond the
//! farthest surface, restricted to the lateral frustum of the raster.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DecomposeError, FitConfig};
use crate::camera::Camera;
use crate::raster::DepthMap;

/// Distance of the back plane beyond the largest finite depth (m).
pub const BACK_MARGIN: f64 = 0.5;
/// Uniform samples extend this fraction of the raster beyond each side.
const LATERAL_MARGIN: f64 = 0.05;
/// Uniform samples extend this far behind the back plane (m).
const BEHIND_MARGIN: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledSample {
    /// World-frame position (m).
    pub position: Vector3<f64>,
    pub inside: bool,
}

impl LabeledSample {
    pub fn label(&self) -> f64 {
        if self.inside {
            1.0
        } else {
            0.0
        }
    }
}

/// Whether a world point lies in the solid defined by `depth` seen from
/// `camera` with the given back plane depth.
pub fn solid_label(depth: &DepthMap, camera: &Camera, back_plane: f64, p_world: &Vector3<f64>) -> bool {
    let Some((u, v, z)) = camera.project(p_world) else {
        return false;
    };
    if !(u >= 0.0 && v >= 0.0) {
        return false;
    }
    let (pu, pv) = (u.floor(), v.floor());
    if pu >= depth.width() as f64 || pv >= depth.height() as f64 {
        return false;
    }
    let surface = depth.get(pu as u32, pv as u32);
    surface.is_finite() && z >= surface && z <= back_plane
}

/// Draws `near_surface_samples` points at surface ± band along pixel-center
/// rays (inside behind the surface, outside in front of it), then
/// `volume_samples` points uniformly in pixel/depth coordinates over a box
/// slightly larger than the frustum, labeled by [`solid_label`].
pub fn sample_labels(
    depth: &DepthMap,
    camera: &Camera,
    cfg: &FitConfig,
    rng_seed: u64,
) -> Result<Vec<LabeledSample>, DecomposeError> {
    if depth.width() != camera.width() || depth.height() != camera.height() {
        return Err(DecomposeError::DimensionMismatch {
            depth_w: depth.width(),
            depth_h: depth.height(),
            cam_w: camera.width(),
            cam_h: camera.height(),
        });
    }
    let (Some(z_min), Some(z_max)) = (depth.min_finite(), depth.max_finite()) else {
        return Err(DecomposeError::EmptyDepth);
    };
    let back = z_max + BACK_MARGIN;
    let band = cfg.surface_band;
    let w = depth.width();
    let finite: Vec<(u32, u32)> = (0..depth.height())
        .flat_map(|v| (0..w).map(move |u| (u, v)))
        .filter(|&(u, v)| depth.get(u, v).is_finite())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut samples = Vec::with_capacity(cfg.near_surface_samples + cfg.volume_samples);
    let to_world = |u: f64, v: f64, z: f64| camera.pose().to_world(&(camera.camera_direction(u, v) * z));

    for _ in 0..cfg.near_surface_samples {
        let (u, v) = finite[rng.random_range(0..finite.len())];
        let surface = depth.get(u, v);
        let behind = rng.random_bool(0.5);
        let z = if behind {
            surface + band
        } else if surface > band {
            surface - band
        } else {
            surface * 0.5
        };
        samples.push(LabeledSample {
            position: to_world(u as f64 + 0.5, v as f64 + 0.5, z),
            inside: behind,
        });
    }

    let (wf, hf) = (w as f64, depth.height() as f64);
    let z_lo = 0.5 * z_min;
    let z_hi = back + BEHIND_MARGIN;
    for _ in 0..cfg.volume_samples {
        let u = rng.random_range(-LATERAL_MARGIN * wf..(1.0 + LATERAL_MARGIN) * wf);
        let v = rng.random_range(-LATERAL_MARGIN * hf..(1.0 + LATERAL_MARGIN) * hf);
        let z = rng.random_range(z_lo..z_hi);
        let position = to_world(u, v, z);
        samples.push(LabeledSample {
            position,
            inside: solid_label(depth, camera, back, &position),
        });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Pose;

    fn camera() -> Camera {
        Camera::new(40.0, 40.0, 15.5, 15.5, 32, 32, Pose::identity()).unwrap()
    }

    #[test]
    fn constant_wall_labels() {
        let depth = DepthMap::filled(32, 32, 2.0).unwrap();
        let cam = camera();
        let back = 2.0 + BACK_MARGIN;
        // Center pixel ray: pixel 15 center is on the axis.
        assert!(solid_label(&depth, &cam, back, &Vector3::new(0.0, 0.0, 2.05)));
        assert!(!solid_label(&depth, &cam, back, &Vector3::new(0.0, 0.0, 1.95)));
        assert!(!solid_label(&depth, &cam, back, &Vector3::new(0.0, 0.0, back + 0.01)));
        assert!(!solid_label(&depth, &cam, back, &Vector3::new(0.0, 0.0, -3.0)));
    }

    #[test]
    fn near_surface_samples_straddle_the_wall() {
        let depth = DepthMap::filled(32, 32, 2.0).unwrap();
        let cfg = FitConfig { near_surface_samples: 200, volume_samples: 0, ..Default::default() };
        let s = sample_labels(&depth, &camera(), &cfg, 1).unwrap();
        for x in s {
            let expected = if x.inside { 2.05 } else { 1.95 };
            assert!((x.position.z - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn all_infinite_depth_is_an_error() {
        let depth = DepthMap::filled(32, 32, f64::INFINITY).unwrap();
        assert!(matches!(
            sample_labels(&depth, &camera(), &FitConfig::default(), 0),
            Err(DecomposeError::EmptyDepth)
        ));
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let depth = DepthMap::filled(32, 32, 3.0).unwrap();
        let cfg = FitConfig { near_surface_samples: 100, volume_samples: 100, ..Default::default() };
        let a = sample_labels(&depth, &camera(), &cfg, 9).unwrap();
        let b = sample_labels(&depth, &camera(), &cfg, 9).unwrap();
        let c = sample_labels(&depth, &camera(), &cfg, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
