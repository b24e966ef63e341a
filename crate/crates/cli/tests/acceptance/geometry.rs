use std::time::Instant;

use b2w_core::decompose::{loss_and_gradient, polish, sample_labels, ConvexParams, FitConfig, LabeledSample};
use b2w_core::metrics::depth_errors;
use b2w_core::raytrace::intersect_convex;
use b2w_core::synthetic::{box_scene, perturb_box, square_camera};
use b2w_core::{render_depth, ConvexPrimitive, Halfspace, Matrix3, Ray, Scene, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{ensure, Check};

const MARCH_STEP: f64 = 1e-4;
const MARCH_TOLERANCE: f64 = 2e-4;
const MARCH_MAX_T: f64 = 12.0;

fn unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

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

/// First and last march sample inside the convex (max of plane distances
/// at most zero).
fn march(ray: &Ray, p: &ConvexPrimitive) -> Option<(f64, f64)> {
    let sd = |x: &Vector3<f64>| p.halfspaces().iter().map(|h| h.signed_distance(x)).fold(f64::NEG_INFINITY, f64::max);
    let mut first = None;
    let mut last = None;
    for i in 0..=(MARCH_MAX_T / MARCH_STEP) as usize {
        let t = i as f64 * MARCH_STEP;
        if sd(&ray.at(t)) <= 0.0 {
            first.get_or_insert(t);
            last = Some(t);
        } else if first.is_some() {
            break;
        }
    }
    first.zip(last)
}

/// 1000 random convex/ray pairs; slab entry and exit agree with a 1e-4 m
/// ray march within 2e-4 m, in under 10 s.
pub fn ray_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst: f64 = 0.0;
    let mut hits = 0;
    for case in 0..1000 {
        let center = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let p = random_convex(&mut rng, center);
        let origin = if case % 10 == 0 { center } else { center + unit(&mut rng) * rng.random_range(2.0..5.0) };
        let target = center + unit(&mut rng) * rng.random_range(0.0..1.5);
        let dir = if rng.random_bool(0.9) { target - origin } else { unit(&mut rng) };
        let ray = Ray::new(origin, dir).unwrap();
        match (intersect_convex(&ray, &p), march(&ray, &p)) {
            (Some((t0, t1)), Some((m0, m1))) => {
                hits += 1;
                worst = worst.max((t0 - m0).abs()).max((t1.min(MARCH_MAX_T) - m1).abs());
            }
            (None, None) => {}
            // A chord shorter than the march step can fall between samples.
            (Some((t0, t1)), None) if t1 - t0 < MARCH_STEP => {}
            (s, m) => return Err(format!("case {case}: slab {s:?} vs march {m:?}")),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(worst <= MARCH_TOLERANCE, "worst disagreement {worst:.3e} m > {MARCH_TOLERANCE:e}");
    ensure!(secs < 10.0, "took {secs:.1} s (limit 10 s)");
    Ok(format!("1000 pairs ({hits} hits), worst {worst:.2e} m <= 2e-4 m"))
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<ConvexParams>, Vec<LabeledSample>, FitConfig) {
    let k = rng.random_range(1..=3);
    let params = (0..k)
        .map(|i| {
            let c = Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            let mut b = Matrix3::from_diagonal(&Vector3::new(
                rng.random_range(0.2..0.6),
                rng.random_range(0.2..0.6),
                rng.random_range(0.2..0.6),
            ));
            for v in b.iter_mut() {
                *v += rng.random_range(-0.08..0.08);
            }
            let mut cp = ConvexParams::from_primitive(&ConvexPrimitive::parallelepiped(format!("p{i}"), c, b).unwrap());
            for plane in cp.planes.iter_mut() {
                let s = rng.random_range(0.8..1.25);
                plane.iter_mut().for_each(|v| *v *= s);
            }
            cp
        })
        .collect();
    let samples = (0..rng.random_range(50..200))
        .map(|_| LabeledSample {
            position: Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            inside: rng.random_bool(0.5),
        })
        .collect();
    let cfg = FitConfig {
        sharpness: rng.random_range(10.0..75.0),
        indicator_gain: rng.random_range(10.0..75.0),
        overlap_weight: rng.random_range(0.0..0.5),
        volume_weight: rng.random_range(0.0..0.05),
        ..FitConfig::default()
    };
    (params, samples, cfg)
}

/// 50 random instances; analytic gradient vs central differences (h = 1e-6),
/// max relative error below 1e-4, in under 30 s.
pub fn gradient_check() -> Check {
    const H: f64 = 1e-6;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..50 {
        let (params, samples, cfg) = random_instance(&mut rng);
        let (_, grad) = loss_and_gradient(&params, &samples, &cfg);
        let total = |k: usize, d: f64| {
            let mut q = params.clone();
            let (mut i, mut j) = (k, 0);
            while i >= q[j].len() {
                i -= q[j].len();
                j += 1;
            }
            q[j].planes[i / 4][i % 4] += d;
            loss_and_gradient(&q, &samples, &cfg).0.total
        };
        for (k, g) in grad.iter().enumerate() {
            let fd = (total(k, H) - total(k, -H)) / (2.0 * H);
            worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-6));
            checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(worst < 1e-4, "max relative error {worst:.3e} >= 1e-4");
    ensure!(secs < 30.0, "took {secs:.1} s (limit 30 s)");
    Ok(format!("50 instances, {checked} partials, max relative error {worst:.2e} < 1e-4"))
}

/// Synthetic 3-box scenes at 64x64 with seeds perturbed by 10%; polished
/// re-render reaches AbsRel < 0.05 in at least 9 of 10 trials, in under
/// 5 minutes.
pub fn recovery() -> Check {
    let start = Instant::now();
    let cfg = FitConfig {
        near_surface_samples: 6000,
        volume_samples: 6000,
        iterations: 300,
        ..FitConfig::default()
    };
    let mut rels = Vec::new();
    for trial in 0..10u64 {
        let seed = 1100 + trial;
        let scene = box_scene(square_camera(64, 64), 3, seed);
        let (depth, _) = render_depth(&scene);
        let samples = sample_labels(&depth, scene.camera(), &cfg, seed).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let seeds: Vec<_> = scene
            .primitives()
            .iter()
            .map(|p| {
                let b = p.bounds();
                perturb_box(p.id(), (b.min + b.max) / 2.0, b.extents() / 2.0, 0.1, &mut rng)
            })
            .collect();
        let (prims, _) = polish(&seeds, &samples, &cfg, seed).map_err(|e| format!("trial {trial}: {e}"))?;
        let fitted = Scene::new(prims, *scene.camera(), "", 0).map_err(|e| e.to_string())?;
        let e = depth_errors(&render_depth(&fitted).0, &depth, false).map_err(|e| e.to_string())?;
        rels.push(e.abs_rel);
    }
    let passed = rels.iter().filter(|r| **r < 0.05).count();
    let secs = start.elapsed().as_secs_f64();
    let worst = rels.iter().copied().fold(0.0, f64::max);
    ensure!(passed >= 9, "{passed}/10 trials below AbsRel 0.05: {rels:.4?}");
    ensure!(secs < 300.0, "took {secs:.0} s (limit 300 s)");
    Ok(format!("{passed}/10 trials with AbsRel < 0.05 (worst {worst:.4})"))
}
