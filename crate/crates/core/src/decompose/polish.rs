//! Adam descent on the fit loss followed by pruning.

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_and_gradient, loss_only, parameter_count, ConvexParams};
use super::occupancy::{indicator, smooth_distance};
use super::sampling::LabeledSample;
use super::{DecomposeError, FitConfig};
use crate::primitive::{ConvexPrimitive, Halfspace};

const ADAM_EPS: f64 = 1e-8;
const HOLDOUT_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexCoverage {
    pub id: String,
    /// Fraction of inside training samples covered by this convex alone.
    pub unique_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub entry_loss: f64,
    /// Training loss of the returned primitives (after pruning).
    pub final_loss: f64,
    pub iterations: usize,
    /// Unique coverage of every convex before pruning.
    pub coverage: Vec<ConvexCoverage>,
    pub pruned: Vec<String>,
    pub holdout_samples: usize,
    pub holdout_accuracy_entry: f64,
    pub holdout_accuracy: f64,
    pub diverged: bool,
}

impl FitReport {
    pub fn to_document(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut s = crate::canonical_json(&value);
        s.push('\n');
        s
    }
}

/// Deterministic split of samples into (training, held-out), holding out
/// 10% by a seeded shuffle.
pub fn split_holdout(samples: &[LabeledSample], rng_seed: u64) -> (Vec<LabeledSample>, Vec<LabeledSample>) {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ 0x401d_0u64);
    idx.shuffle(&mut rng);
    let n_hold = (samples.len() as f64 * HOLDOUT_FRACTION).floor() as usize;
    let (hold, train) = idx.split_at(n_hold);
    let mut train: Vec<usize> = train.to_vec();
    let mut hold: Vec<usize> = hold.to_vec();
    // Original order keeps chunked reductions independent of the shuffle.
    train.sort_unstable();
    hold.sort_unstable();
    (
        train.into_iter().map(|i| samples[i]).collect(),
        hold.into_iter().map(|i| samples[i]).collect(),
    )
}

/// Per-convex occupancies at `x`.
fn occupancies(params: &[ConvexParams], x: &Vector3<f64>, cfg: &FitConfig, scratch: &mut Vec<f64>) -> Vec<f64> {
    params
        .iter()
        .map(|p| {
            scratch.resize(p.planes.len(), 0.0);
            indicator(smooth_distance(&p.planes, x, cfg.sharpness, scratch), cfg.indicator_gain)
        })
        .collect()
}

fn accuracy(params: &[ConvexParams], samples: &[LabeledSample], cfg: &FitConfig) -> f64 {
    if samples.is_empty() {
        return 1.0;
    }
    let mut scratch = Vec::new();
    let correct = samples
        .iter()
        .filter(|s| {
            let outside: f64 = occupancies(params, &s.position, cfg, &mut scratch)
                .iter()
                .map(|phi| 1.0 - phi)
                .product();
            ((1.0 - outside) > 0.5) == s.inside
        })
        .count();
    correct as f64 / samples.len() as f64
}

fn unique_coverage(params: &[ConvexParams], samples: &[LabeledSample], cfg: &FitConfig) -> Vec<f64> {
    let mut counts = vec![0usize; params.len()];
    let mut total = 0usize;
    let mut scratch = Vec::new();
    for s in samples.iter().filter(|s| s.inside) {
        total += 1;
        let phi = occupancies(params, &s.position, cfg, &mut scratch);
        let mut covering = phi.iter().enumerate().filter(|(_, v)| **v > 0.5);
        if let (Some((k, _)), None) = (covering.next(), covering.next()) {
            counts[k] += 1;
        }
    }
    counts
        .into_iter()
        .map(|c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect()
}

/// Rescales each plane to a unit normal. Fails on a vanishing normal.
fn project_to_unit(params: &mut [ConvexParams]) -> bool {
    for p in params.iter_mut() {
        for plane in p.planes.iter_mut() {
            let len = (plane[0] * plane[0] + plane[1] * plane[1] + plane[2] * plane[2]).sqrt();
            if !(len > 1e-12) || !len.is_finite() {
                return false;
            }
            for v in plane.iter_mut() {
                *v /= len;
            }
        }
    }
    true
}

fn to_primitive(p: &ConvexParams) -> Option<ConvexPrimitive> {
    let hs: Option<Vec<Halfspace>> = p
        .planes
        .iter()
        .map(|q| Halfspace::normalized(Vector3::new(q[0], q[1], q[2]), q[3]).ok())
        .collect();
    ConvexPrimitive::new(p.id.clone(), hs?, None).ok()
}

/// Refines primitives against labeled samples and prunes redundant ones.
///
/// Runs `cfg.iterations` Adam steps on the training split, keeping the
/// lowest-loss iterate. Afterwards convexes whose unique coverage of inside
/// training samples is below `cfg.prune_threshold`, or which are no longer
/// bounded and solid, are removed. Labels from the primitives (e.g. seed
/// labels) are kept on survivors.
pub fn polish(
    primitives: &[ConvexPrimitive],
    samples: &[LabeledSample],
    cfg: &FitConfig,
    rng_seed: u64,
) -> Result<(Vec<ConvexPrimitive>, FitReport), DecomposeError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(DecomposeError::NoSamples);
    }
    let (train, holdout) = split_holdout(samples, rng_seed);
    let labels: Vec<Option<String>> = primitives.iter().map(|p| p.label().map(str::to_string)).collect();
    let entry: Vec<ConvexParams> = primitives.iter().map(ConvexParams::from_primitive).collect();
    let n = parameter_count(&entry);

    let mut params = entry.clone();
    let mut best = entry.clone();
    let mut best_loss = f64::INFINITY;
    let mut entry_loss = f64::NAN;
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut diverged_at = None;
    let mut iterations = 0;

    for it in 0..=cfg.iterations {
        let (terms, grad) = loss_and_gradient(&params, &train, cfg);
        if it == 0 {
            entry_loss = terms.total;
        }
        if !terms.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            diverged_at = Some(it);
            break;
        }
        if terms.total < best_loss {
            best_loss = terms.total;
            best.clone_from(&params);
        }
        if it == cfg.iterations {
            break;
        }
        iterations = it + 1;
        let t = (it + 1) as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let mut i = 0;
        for p in params.iter_mut() {
            for plane in p.planes.iter_mut() {
                for value in plane.iter_mut() {
                    let g = grad[i];
                    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                    *value -= cfg.step_size * (m[i] / bc1) / ((v[i] / bc2).sqrt() + ADAM_EPS);
                    i += 1;
                }
            }
        }
        if !project_to_unit(&mut params) {
            diverged_at = Some(it + 1);
            break;
        }
    }

    let holdout_accuracy_entry = accuracy(&entry, &holdout, cfg);
    if best_loss == f64::INFINITY {
        // Not even the entry point was finite.
        best = entry.clone();
    }

    let coverage = unique_coverage(&best, &train, cfg);
    let mut kept_params = Vec::new();
    let mut kept = Vec::new();
    let mut pruned = Vec::new();
    for (k, p) in best.iter().enumerate() {
        let valid = to_primitive(p).map(|prim| prim.with_label(labels[k].clone()));
        match valid {
            Some(prim) if coverage[k] >= cfg.prune_threshold => {
                kept_params.push(p.clone());
                kept.push(prim);
            }
            _ => pruned.push(p.id.clone()),
        }
    }
    let final_loss = loss_only(&kept_params, &train, cfg).total;
    let report = FitReport {
        entry_loss,
        final_loss,
        iterations,
        coverage: best
            .iter()
            .zip(&coverage)
            .map(|(p, c)| ConvexCoverage {
                id: p.id.clone(),
                unique_coverage: *c,
            })
            .collect(),
        pruned,
        holdout_samples: holdout.len(),
        holdout_accuracy_entry,
        holdout_accuracy: accuracy(&kept_params, &holdout, cfg),
        diverged: diverged_at.is_some(),
    };
    if let Some(iteration) = diverged_at {
        return Err(DecomposeError::Diverged {
            iteration,
            primitives: kept,
            report: Box::new(report),
        });
    }
    Ok((kept, report))
}
