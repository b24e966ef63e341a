//! Fixtures shared by the benchmarks.

use b2w_core::decompose::{sample_labels, ConvexParams, FitConfig, LabeledSample};
use b2w_core::raytrace::pixel_ray;
use b2w_core::synthetic::{box_scene, square_camera};
use b2w_core::{render_depth, Ray, Scene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Eight boxes seen by a camera of the given size.
pub fn scene(width: u32, height: u32) -> Scene {
    box_scene(square_camera(width, height), 8, 3)
}

/// Parameters and labeled samples for one loss evaluation.
pub fn fit_problem(samples: usize) -> (Vec<ConvexParams>, Vec<LabeledSample>, FitConfig) {
    let s = scene(96, 72);
    let (depth, _) = render_depth(&s);
    let cfg = FitConfig {
        near_surface_samples: samples / 2,
        volume_samples: samples - samples / 2,
        ..FitConfig::default()
    };
    let labeled = sample_labels(&depth, s.camera(), &cfg, 3).expect("scene has depth");
    let params = s.primitives().iter().map(ConvexParams::from_primitive).collect();
    (params, labeled, cfg)
}

/// Random pixel rays of a scene's camera.
pub fn rays(scene: &Scene, count: usize) -> Vec<Ray> {
    let cam = scene.camera();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    (0..count)
        .map(|_| {
            pixel_ray(cam, rng.random_range(0..cam.width()), rng.random_range(0..cam.height())).expect("pixel in range")
        })
        .collect()
}
