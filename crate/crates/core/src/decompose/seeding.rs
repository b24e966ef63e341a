//! Initial primitives from k-means over inside samples.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sampling::LabeledSample;
use super::DecomposeError;
use crate::primitive::ConvexPrimitive;

const MAX_LLOYD_ITERATIONS: usize = 100;
/// Inside samples beyond this count are strided down before clustering.
const MAX_CLUSTER_POINTS: usize = 20_000;
const SPREAD: f64 = 1.5;

/// One axis-aligned box per k-means cluster of the inside samples, centered on
/// the cluster mean with half extents `1.5 x` the per-axis standard deviation
/// (never below `min_half_extent`).
///
/// When there are fewer inside samples than `budget`, k is reduced and a
/// warning is logged.
pub fn seed_primitives(
    samples: &[LabeledSample],
    budget: usize,
    min_half_extent: f64,
    rng_seed: u64,
) -> Result<Vec<ConvexPrimitive>, DecomposeError> {
    let inside: Vec<Vector3<f64>> = samples.iter().filter(|s| s.inside).map(|s| s.position).collect();
    if inside.is_empty() || budget == 0 {
        return Err(DecomposeError::NoInsideSamples);
    }
    let points: Vec<Vector3<f64>> = if inside.len() > MAX_CLUSTER_POINTS {
        let stride = inside.len().div_ceil(MAX_CLUSTER_POINTS);
        inside.iter().step_by(stride).copied().collect()
    } else {
        inside
    };
    let k = budget.min(points.len());
    if k < budget {
        log::warn!("only {} inside samples; seeding {k} of {budget} convexes", points.len());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ 0x5eed_5eed);
    let mut centers = kmeans_plus_plus(&points, k, &mut rng);
    let mut assignment = vec![usize::MAX; points.len()];
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        for (a, p) in assignment.iter_mut().zip(&points) {
            let best = nearest(&centers, p);
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        let mut sums = vec![Vector3::zeros(); k];
        let mut counts = vec![0usize; k];
        for (a, p) in assignment.iter().zip(&points) {
            sums[*a] += p;
            counts[*a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j] / counts[j] as f64;
            }
        }
        if !changed {
            break;
        }
    }

    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let members: Vec<&Vector3<f64>> = points
            .iter()
            .zip(&assignment)
            .filter(|(_, a)| **a == j)
            .map(|(p, _)| p)
            .collect();
        if members.is_empty() {
            continue;
        }
        let mean: Vector3<f64> = members.iter().copied().sum::<Vector3<f64>>() / members.len() as f64;
        let var: Vector3<f64> = members
            .iter()
            .map(|p| (*p - mean).component_mul(&(*p - mean)))
            .sum::<Vector3<f64>>()
            / members.len() as f64;
        let half = var.map(|v| (SPREAD * v.sqrt()).max(min_half_extent));
        let id = format!("c{:02}", out.len());
        out.push(ConvexPrimitive::axis_box(id, mean, half).expect("positive half extents"));
    }
    Ok(out)
}

fn nearest(centers: &[Vector3<f64>], p: &Vector3<f64>) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = (p - c).norm_squared();
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

fn kmeans_plus_plus(points: &[Vector3<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vector3<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| (p - centers[0]).norm_squared()).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut idx = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            // All points coincide with existing centers.
            rng.random_range(0..points.len())
        };
        let c = points[next];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min((p - c).norm_squared());
        }
        centers.push(c);
    }
    centers
}
