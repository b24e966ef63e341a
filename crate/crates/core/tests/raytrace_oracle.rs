//! Slab intersection against a fixed-step ray march of the signed distance.

use std::time::Instant;

use b2w_core::raytrace::intersect_convex;
use b2w_core::{ConvexPrimitive, Halfspace, Matrix3, Ray, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-4;
const TOLERANCE: f64 = 2e-4;
const MAX_T: f64 = 12.0;

fn unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Parallelepipeds, or polytopes circumscribing a sphere.
fn random_convex(rng: &mut ChaCha8Rng, center: Vector3<f64>) -> ConvexPrimitive {
    if rng.random_bool(0.5) {
        let mut b = Matrix3::from_diagonal(&Vector3::new(
            rng.random_range(0.2..1.5),
            rng.random_range(0.2..1.5),
            rng.random_range(0.2..1.5),
        ));
        for v in b.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
        if let Ok(p) = ConvexPrimitive::parallelepiped("p", center, b) {
            return p;
        }
    }
    loop {
        let r = rng.random_range(0.3..1.2);
        let count = rng.random_range(6..14);
        let hs: Vec<Halfspace> = (0..count)
            .map(|_| {
                let n = unit(rng);
                Halfspace::new(n, n.dot(&center) + r * rng.random_range(1.0..1.6)).unwrap()
            })
            .collect();
        if let Ok(p) = ConvexPrimitive::new("q", hs, None) {
            return p;
        }
    }
}

fn signed_distance(p: &ConvexPrimitive, x: &Vector3<f64>) -> f64 {
    p.halfspaces().iter().map(|h| h.signed_distance(x)).fold(f64::NEG_INFINITY, f64::max)
}

/// First and last sample along the ray that lies inside.
fn march(ray: &Ray, p: &ConvexPrimitive) -> Option<(f64, f64)> {
    let steps = (MAX_T / STEP) as usize;
    let mut first = None;
    let mut last = None;
    for i in 0..=steps {
        let t = i as f64 * STEP;
        if signed_distance(p, &ray.at(t)) <= 0.0 {
            first.get_or_insert(t);
            last = Some(t);
        } else if first.is_some() {
            break;
        }
    }
    first.zip(last)
}

#[test]
fn slab_matches_ray_march() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    let (mut hits, mut misses, mut slivers) = (0, 0, 0);
    for case in 0..1000 {
        let center = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let p = random_convex(&mut rng, center);
        let origin = if case % 10 == 0 {
            // Origin inside the convex.
            center
        } else {
            center + unit(&mut rng) * rng.random_range(2.0..5.0)
        };
        let target = center + unit(&mut rng) * rng.random_range(0.0..1.5);
        let dir = if rng.random_bool(0.9) { target - origin } else { unit(&mut rng) };
        let ray = Ray::new(origin, dir).unwrap();
        let slab = intersect_convex(&ray, &p);
        let marched = march(&ray, &p);
        match (slab, marched) {
            (Some((t0, t1)), Some((m0, m1))) => {
                hits += 1;
                worst = worst.max((t0 - m0).abs()).max((t1.min(MAX_T) - m1).abs());
            }
            (None, None) => misses += 1,
            // A chord shorter than the march step can fall between samples.
            (Some((t0, t1)), None) if t1 - t0 < STEP => slivers += 1,
            (s, m) => panic!("case {case}: slab {s:?} vs march {m:?}"),
        }
    }
    println!("{hits} hits, {misses} misses, {slivers} slivers, worst {worst:.2e}, {:?}", start.elapsed());
    assert!(worst <= TOLERANCE, "worst disagreement {worst:e}");
    assert!(hits > 500);
    assert!(start.elapsed().as_secs_f64() < 10.0);
}
