use b2w_core::metrics::{confusion_and_bacc, depth_errors, fit_scale_shift};
use b2w_core::DepthMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{ensure, Check};

fn row(values: Vec<f64>) -> DepthMap {
    let n = values.len() as u32;
    DepthMap::new(n, 1, values).unwrap()
}

fn random_depths(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.5..10.0)).collect()
}

/// pred = 1.1 ref gives AbsRel 0.1 and RMSLE ln 1.1 within 1e-12; with
/// alignment every metric is below 1e-9 for random affine perturbations.
pub fn metrics_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..500);
        let r = random_depths(&mut rng, n);
        let p: Vec<f64> = r.iter().map(|v| 1.1 * v).collect();
        let e = depth_errors(&row(p), &row(r), false).map_err(|e| e.to_string())?;
        worst_ratio = worst_ratio.max((e.abs_rel - 0.1).abs()).max((e.rmsle - 1.1f64.ln()).abs());
    }
    ensure!(worst_ratio <= 1e-12, "constant-ratio error {worst_ratio:.3e} > 1e-12");

    let mut worst_aligned: f64 = 0.0;
    let mut cases = 0;
    while cases < 500 {
        let n = rng.random_range(2..300);
        let r = random_depths(&mut rng, n);
        let s = rng.random_range(0.05..20.0);
        let t = rng.random_range(-0.4..5.0);
        let p: Vec<f64> = r.iter().map(|v| s * v + t).collect();
        // Predictions must be valid (positive) depth maps.
        if p.iter().any(|v| *v <= 0.0) {
            continue;
        }
        cases += 1;
        let e = depth_errors(&row(p), &row(r), true).map_err(|e| e.to_string())?;
        worst_aligned = worst_aligned.max(e.abs_rel).max(e.rmse).max(e.rmsle);
    }
    ensure!(worst_aligned < 1e-9, "aligned metric {worst_aligned:.3e} >= 1e-9");
    Ok(format!(
        "ratio 1.1 exact to {worst_ratio:.1e} (200 maps); aligned affine max {worst_aligned:.1e} (500 cases)"
    ))
}

/// Closed-form scale and shift never lose to a 200 x 200 grid search, over
/// 100 random instances.
pub fn scale_shift_optimality() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    let residual = |p: &[f64], r: &[f64], s: f64, t: f64| -> f64 { p.iter().zip(r).map(|(a, b)| (s * a + t - b).powi(2)).sum() };
    let mut min_margin = f64::INFINITY;
    for case in 0..100 {
        let n = rng.random_range(5..60);
        let (s0, t0) = (rng.random_range(0.2..3.0), rng.random_range(-1.0..1.0));
        let p = random_depths(&mut rng, n);
        let r: Vec<f64> = p.iter().map(|v| (s0 * v + t0 + rng.random_range(-0.3..0.3)).max(0.05)).collect();
        let fit = fit_scale_shift(&row(p.clone()), &row(r.clone()), None).map_err(|e| e.to_string())?;
        let closed = residual(&p, &r, fit.scale, fit.shift);
        let mut best = f64::INFINITY;
        for i in 0..200 {
            for j in 0..200 {
                let s = s0 - 1.0 + 2.0 * i as f64 / 199.0;
                let t = t0 - 2.0 + 4.0 * j as f64 / 199.0;
                best = best.min(residual(&p, &r, s, t));
            }
        }
        ensure!(closed <= best, "case {case}: closed-form residual {closed} > grid {best}");
        min_margin = min_margin.min(best - closed);
    }
    Ok(format!("100 instances, closed form <= grid minimum (smallest margin {min_margin:.2e})"))
}

fn classes(k: usize) -> Vec<String> {
    ["bedroom", "kitchen", "living room", "bathroom", "dining room", "office"][..k]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// Hand-built confusion cases are exact; random label sets match a direct
/// counting oracle.
pub fn bacc_arithmetic() -> Check {
    let c = classes(3);
    let q = |a: usize, b: usize| (c[a].clone(), c[b].clone());
    let hand: [(Vec<(String, String)>, f64); 4] = [
        (vec![q(0, 0), q(0, 0), q(1, 1), q(1, 0)], 75.0),
        (vec![q(0, 2), q(1, 1)], 50.0),
        (vec![q(0, 0), q(1, 1), q(2, 2)], 100.0),
        (
            vec![q(0, 0), q(0, 1), q(0, 2), q(1, 1), q(1, 1), q(1, 0), q(2, 2)],
            100.0 * (1.0 / 3.0 + 2.0 / 3.0 + 1.0) / 3.0,
        ),
    ];
    for (i, (pairs, expected)) in hand.iter().enumerate() {
        let (_, b) = confusion_and_bacc(&c, pairs).map_err(|e| e.to_string())?;
        ensure!(b == *expected, "hand case {i}: {b} != {expected}");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1006);
    for case in 0..500 {
        let k = rng.random_range(2..=6);
        let c = classes(k);
        let pairs: Vec<(String, String)> = (0..rng.random_range(1..300))
            .map(|_| (c[rng.random_range(0..k)].clone(), c[rng.random_range(0..k)].clone()))
            .collect();
        let (m, b) = confusion_and_bacc(&c, &pairs).map_err(|e| e.to_string())?;
        let mut recall_sum = 0.0;
        let mut present = 0;
        for (i, a) in c.iter().enumerate() {
            for (j, p) in c.iter().enumerate() {
                let n = pairs.iter().filter(|(x, y)| x == a && y == p).count() as u64;
                ensure!(m.counts[i][j] == n, "case {case}: count [{i}][{j}] {} != {n}", m.counts[i][j]);
            }
            let total = pairs.iter().filter(|(x, _)| x == a).count();
            if total > 0 {
                recall_sum += pairs.iter().filter(|(x, y)| x == a && y == a).count() as f64 / total as f64;
                present += 1;
            }
        }
        let expected = 100.0 * recall_sum / present as f64;
        ensure!((b - expected).abs() < 1e-12, "case {case}: bAcc {b} vs oracle {expected}");
    }
    Ok("4 hand cases exact (incl. recalls 1.0/0.5 -> 75.0), 500 random cases match counting oracle".into())
}
