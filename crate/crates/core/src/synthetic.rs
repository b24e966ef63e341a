//! Random box scenes for demos, benchmarks and tests.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{Camera, Pose};
use crate::primitive::ConvexPrimitive;
use crate::scene::Scene;

/// Pinhole camera at the origin looking down +z with a 90 degree horizontal
/// field of view.
pub fn square_camera(width: u32, height: u32) -> Camera {
    let f = width as f64 / 2.0;
    Camera::new(f, f, width as f64 / 2.0, height as f64 / 2.0, width, height, Pose::identity())
        .expect("valid intrinsics")
}

/// `count` axis-aligned boxes, 3 to 6 m in front of the camera and inside
/// its view, with half extents between 0.3 and 0.8 m. Ids are `b0`, `b1`, ...
pub fn box_scene(camera: Camera, count: usize, rng_seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (w, h) = (camera.width() as f64, camera.height() as f64);
    let prims = (0..count)
        .map(|i| {
            let z = rng.random_range(3.0..6.0);
            let u = rng.random_range(0.25 * w..0.75 * w);
            let v = rng.random_range(0.25 * h..0.75 * h);
            let center = camera.camera_direction(u, v) * z;
            let half = Vector3::new(
                rng.random_range(0.3..0.8),
                rng.random_range(0.3..0.8),
                rng.random_range(0.3..0.8),
            );
            ConvexPrimitive::axis_box(format!("b{i}"), camera.pose().to_world(&center), half)
                .expect("positive extents")
        })
        .collect();
    Scene::new(prims, camera, "", rng_seed).expect("ids are distinct")
}

/// Axis-aligned box with its center moved and half extents scaled by up to
/// `fraction` of each half extent.
pub fn perturb_box(
    id: &str,
    center: Vector3<f64>,
    half: Vector3<f64>,
    fraction: f64,
    rng: &mut impl Rng,
) -> ConvexPrimitive {
    let mut jitter = || rng.random_range(-fraction..=fraction);
    let c = center + Vector3::new(jitter() * half.x, jitter() * half.y, jitter() * half.z);
    let h = Vector3::new(half.x * (1.0 + jitter()), half.y * (1.0 + jitter()), half.z * (1.0 + jitter()));
    ConvexPrimitive::axis_box(id, c, h).expect("positive extents")
}
