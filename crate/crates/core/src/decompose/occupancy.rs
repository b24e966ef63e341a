//! Smooth inside/outside indicator of convexes.
//!
//! For halfspaces `(n_h, d_h)` the smooth signed distance is
//! `Δ(x) = (1/δ) log Σ_h exp(δ (n_h·x - d_h))`, and the indicator is
//! `Φ(x) = sigmoid(-σ Δ(x))`. A union of convexes is `1 - Π_k (1 - Φ_k)`.

use nalgebra::Vector3;

use crate::primitive::ConvexPrimitive;

/// Largest double below one; keeps Φ strictly inside (0, 1).
pub(crate) const PHI_MAX: f64 = 1.0 - f64::EPSILON / 2.0;
pub(crate) const PHI_MIN: f64 = f64::MIN_POSITIVE;

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Smooth-max of plane distances. Writes the softmax weights into `weights`
/// and returns `Δ`.
#[inline]
pub(crate) fn smooth_distance(planes: &[[f64; 4]], x: &Vector3<f64>, sharpness: f64, weights: &mut [f64]) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for (w, p) in weights.iter_mut().zip(planes) {
        let a = sharpness * (p[0] * x.x + p[1] * x.y + p[2] * x.z - p[3]);
        *w = a;
        m = m.max(a);
    }
    let mut sum = 0.0;
    for w in weights.iter_mut() {
        *w = (*w - m).exp();
        sum += *w;
    }
    let inv = 1.0 / sum;
    for w in weights.iter_mut() {
        *w *= inv;
    }
    (m + sum.ln()) / sharpness
}

#[inline]
pub(crate) fn indicator(delta: f64, gain: f64) -> f64 {
    sigmoid(-gain * delta).clamp(PHI_MIN, PHI_MAX)
}

pub(crate) fn planes_of(p: &ConvexPrimitive) -> Vec<[f64; 4]> {
    p.halfspaces()
        .iter()
        .map(|h| {
            let n = h.normal();
            [n.x, n.y, n.z, h.offset()]
        })
        .collect()
}

/// Smooth occupancy of one convex, in (0, 1).
pub fn smooth_occupancy(p: &ConvexPrimitive, x: &Vector3<f64>, sharpness: f64, gain: f64) -> f64 {
    let planes = planes_of(p);
    let mut w = vec![0.0; planes.len()];
    indicator(smooth_distance(&planes, x, sharpness, &mut w), gain)
}

/// Complementary-product union of per-convex occupancies.
///
/// # Panics
/// If `primitives` is empty.
pub fn union_occupancy(primitives: &[ConvexPrimitive], x: &Vector3<f64>, sharpness: f64, gain: f64) -> f64 {
    assert!(!primitives.is_empty(), "union of zero convexes");
    let outside: f64 = primitives
        .iter()
        .map(|p| 1.0 - smooth_occupancy(p, x, sharpness, gain))
        .product();
    1.0 - outside
}
