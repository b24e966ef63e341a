//! Fit objective and its analytic gradient.
//!
//! `loss = mean_i (U(x_i) - y_i)^2
//!        + w_overlap * mean_i Σ_{k<l} Φ_k(x_i) Φ_l(x_i)
//!        + w_volume * Σ_k vol_k`
//!
//! where `vol_k` is the volume of the convex's axis-aligned bounding box,
//! obtained from six linear programs. Its gradient comes from the LP duals:
//! the optimum of `max c·x s.t. N x <= d` moves by `y_h` per unit of `d_h` and
//! by `-y_h x*` per unit of `n_h`.
//!
//! Samples are processed in fixed-size chunks whose partial sums are added in
//! chunk order, so results are bit-identical for any thread count.

use rayon::prelude::*;

use super::occupancy::{indicator, planes_of, sigmoid, smooth_distance};
use super::sampling::LabeledSample;
use super::FitConfig;
use crate::lp;
use crate::primitive::ConvexPrimitive;

const CHUNK: usize = 2048;

/// Raw, unconstrained halfspace parameters of one convex: rows
/// `[n_x, n_y, n_z, d]` describing `n · x <= d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexParams {
    pub id: String,
    pub planes: Vec<[f64; 4]>,
}

impl ConvexParams {
    pub fn from_primitive(p: &ConvexPrimitive) -> Self {
        ConvexParams {
            id: p.id().to_string(),
            planes: planes_of(p),
        }
    }

    pub fn len(&self) -> usize {
        4 * self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }
}

/// Loss split into its weighted terms; `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub total: f64,
    pub mse: f64,
    pub overlap: f64,
    pub volume: f64,
}

/// Number of scalar parameters (gradient length).
pub fn parameter_count(params: &[ConvexParams]) -> usize {
    params.iter().map(ConvexParams::len).sum()
}

/// Loss and gradient for primitives in their validated form. The gradient is
/// laid out convex by convex, halfspace by halfspace, as `[n_x, n_y, n_z, d]`.
pub fn fit_loss(primitives: &[ConvexPrimitive], samples: &[LabeledSample], cfg: &FitConfig) -> (LossTerms, Vec<f64>) {
    let params: Vec<ConvexParams> = primitives.iter().map(ConvexParams::from_primitive).collect();
    loss_and_gradient(&params, samples, cfg)
}

pub fn loss_and_gradient(params: &[ConvexParams], samples: &[LabeledSample], cfg: &FitConfig) -> (LossTerms, Vec<f64>) {
    let (terms, grad) = evaluate(params, samples, cfg, true);
    (terms, grad.expect("gradient requested"))
}

pub(crate) fn loss_only(params: &[ConvexParams], samples: &[LabeledSample], cfg: &FitConfig) -> LossTerms {
    evaluate(params, samples, cfg, false).0
}

struct ChunkSums {
    mse: f64,
    overlap: f64,
    grad: Option<Vec<f64>>,
}

fn evaluate(
    params: &[ConvexParams],
    samples: &[LabeledSample],
    cfg: &FitConfig,
    with_grad: bool,
) -> (LossTerms, Option<Vec<f64>>) {
    let n_params = parameter_count(params);
    let n = samples.len().max(1) as f64;
    let partials: Vec<ChunkSums> = samples
        .par_chunks(CHUNK)
        .map(|chunk| chunk_sums(params, chunk, cfg, n, with_grad, n_params))
        .collect();

    let mut mse = 0.0;
    let mut overlap = 0.0;
    let mut grad = with_grad.then(|| vec![0.0; n_params]);
    for part in partials {
        mse += part.mse;
        overlap += part.overlap;
        if let (Some(g), Some(pg)) = (grad.as_mut(), part.grad) {
            for (a, b) in g.iter_mut().zip(pg) {
                *a += b;
            }
        }
    }

    let mut volume = 0.0;
    let mut offset = 0;
    for p in params {
        let len = p.len();
        let slot = grad.as_mut().map(|g| &mut g[offset..offset + len]);
        volume += aabb_volume(&p.planes, slot, cfg.volume_weight);
        offset += len;
    }

    let terms = LossTerms {
        mse: mse / n,
        overlap: cfg.overlap_weight * (overlap / n),
        volume: cfg.volume_weight * volume,
        total: 0.0,
    };
    let terms = LossTerms {
        total: terms.mse + terms.overlap + terms.volume,
        ..terms
    };
    (terms, grad)
}

fn chunk_sums(
    params: &[ConvexParams],
    chunk: &[LabeledSample],
    cfg: &FitConfig,
    n: f64,
    with_grad: bool,
    n_params: usize,
) -> ChunkSums {
    let k = params.len();
    let total_planes: usize = params.iter().map(|p| p.planes.len()).sum();
    let mut weights = vec![0.0; total_planes];
    let mut delta = vec![0.0; k];
    let mut phi = vec![0.0; k];
    let mut prefix = vec![1.0; k + 1];
    let mut suffix = vec![1.0; k + 1];
    let mut grad = with_grad.then(|| vec![0.0; n_params]);
    let (sharp, gain) = (cfg.sharpness, cfg.indicator_gain);
    let inv_n = 1.0 / n;
    let mut mse = 0.0;
    let mut overlap = 0.0;

    for s in chunk {
        let x = &s.position;
        let y = if s.inside { 1.0 } else { 0.0 };
        let mut off = 0;
        for (j, p) in params.iter().enumerate() {
            let h = p.planes.len();
            delta[j] = smooth_distance(&p.planes, x, sharp, &mut weights[off..off + h]);
            phi[j] = indicator(delta[j], gain);
            off += h;
        }
        for j in 0..k {
            prefix[j + 1] = prefix[j] * (1.0 - phi[j]);
        }
        for j in (0..k).rev() {
            suffix[j] = suffix[j + 1] * (1.0 - phi[j]);
        }
        let union = 1.0 - prefix[k];
        let r = union - y;
        mse += r * r;
        let sum: f64 = phi.iter().sum();
        let sum_sq: f64 = phi.iter().map(|v| v * v).sum();
        overlap += 0.5 * (sum * sum - sum_sq);

        let Some(g) = grad.as_mut() else { continue };
        let mut off = 0;
        let mut base = 0;
        for (j, p) in params.iter().enumerate() {
            let h = p.planes.len();
            let others = prefix[j] * suffix[j + 1];
            let d_phi = (2.0 * r * others + cfg.overlap_weight * (sum - phi[j])) * inv_n;
            // dΦ/dΔ = -σ sigmoid(-σΔ) sigmoid(σΔ), computed without the clamp.
            let z = gain * delta[j];
            let d_delta = d_phi * (-gain) * sigmoid(-z) * sigmoid(z);
            if d_delta != 0.0 {
                for (i, w) in weights[off..off + h].iter().enumerate() {
                    let c = d_delta * w;
                    let gi = base + 4 * i;
                    g[gi] += c * x.x;
                    g[gi + 1] += c * x.y;
                    g[gi + 2] += c * x.z;
                    g[gi + 3] -= c;
                }
            }
            off += h;
            base += 4 * h;
        }
    }
    ChunkSums { mse, overlap, grad }
}

/// Bounding-box volume of `n · x <= d`; adds `weight * ∂vol/∂θ` into `grad`.
/// Unbounded or infeasible sets contribute nothing.
fn aabb_volume(planes: &[[f64; 4]], grad: Option<&mut [f64]>, weight: f64) -> f64 {
    let a: Vec<Vec<f64>> = planes.iter().map(|p| vec![p[0], p[1], p[2]]).collect();
    let b: Vec<f64> = planes.iter().map(|p| p[3]).collect();
    let mut lengths = [0.0; 3];
    let mut solutions = Vec::with_capacity(6);
    for axis in 0..3 {
        let mut c = [0.0; 3];
        c[axis] = 1.0;
        let Some(hi) = lp::maximize(&c, &a, &b).optimal() else { return 0.0 };
        c[axis] = -1.0;
        let Some(lo) = lp::maximize(&c, &a, &b).optimal() else { return 0.0 };
        lengths[axis] = hi.value + lo.value;
        solutions.push((axis, hi));
        solutions.push((axis, lo));
    }
    let volume = lengths[0] * lengths[1] * lengths[2];
    if let Some(g) = grad {
        for (axis, sol) in &solutions {
            let coef = weight * lengths[(axis + 1) % 3] * lengths[(axis + 2) % 3];
            for (h, &y) in sol.duals.iter().enumerate() {
                if y == 0.0 {
                    continue;
                }
                let c = coef * y;
                g[4 * h] -= c * sol.x[0];
                g[4 * h + 1] -= c * sol.x[1];
                g[4 * h + 2] -= c * sol.x[2];
                g[4 * h + 3] += c;
            }
        }
    }
    volume
}
