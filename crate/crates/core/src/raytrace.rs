//! Ray casting of convex primitives into z-depth maps, id buffers and
//! silhouettes.
//!
//! Depth is camera-frame z, not ray length. Rays pass through pixel centers.
//! Rows are traced in parallel; every pixel is computed independently, so the
//! output does not depend on the thread count.

use std::collections::BTreeSet;

use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

use crate::camera::Camera;
use crate::primitive::ConvexPrimitive;
use crate::raster::{DepthMap, IdBuffer, Mask};
use crate::scene::Scene;

/// Depth reported for a primitive that contains the camera center. Acts as a
/// near plane so rendered depth stays strictly positive.
pub const NEAR_DEPTH: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RaytraceError {
    #[error("pixel ({u}, {v}) outside the {width}x{height} raster")]
    PixelOutOfRange { u: u32, v: u32, width: u32, height: u32 },
    #[error("unknown primitive id {0:?}")]
    UnknownId(String),
    #[error("depth raster {depth_w}x{depth_h} does not match camera {cam_w}x{cam_h}")]
    DimensionMismatch {
        depth_w: u32,
        depth_h: u32,
        cam_w: u32,
        cam_h: u32,
    },
    #[error("ray direction must be a finite non-zero vector")]
    BadDirection,
}

impl RaytraceError {
    pub fn code(&self) -> &'static str {
        match self {
            RaytraceError::PixelOutOfRange { .. } => "raytracer.pixel_out_of_range",
            RaytraceError::UnknownId(_) => "raytracer.unknown_id",
            RaytraceError::DimensionMismatch { .. } => "raytracer.dimension_mismatch",
            RaytraceError::BadDirection => "raytracer.bad_direction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    origin: Vector3<f64>,
    direction: Vector3<f64>,
}

impl Ray {
    /// Normalizes `direction`.
    pub fn new(origin: Vector3<f64>, direction: Vector3<f64>) -> Result<Self, RaytraceError> {
        let len = direction.norm();
        if !(len > 0.0 && len.is_finite()) || origin.iter().any(|v| !v.is_finite()) {
            return Err(RaytraceError::BadDirection);
        }
        Ok(Ray {
            origin,
            direction: direction / len,
        })
    }

    pub fn origin(&self) -> &Vector3<f64> {
        &self.origin
    }

    pub fn direction(&self) -> &Vector3<f64> {
        &self.direction
    }

    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction * t
    }
}

/// World-space ray through the center of pixel `(u, v)`.
pub fn pixel_ray(camera: &Camera, u: u32, v: u32) -> Result<Ray, RaytraceError> {
    if u >= camera.width() || v >= camera.height() {
        return Err(RaytraceError::PixelOutOfRange {
            u,
            v,
            width: camera.width(),
            height: camera.height(),
        });
    }
    Ok(center_ray(camera, u, v).0)
}

/// Center ray plus the factor converting ray length to z-depth.
#[inline]
fn center_ray(camera: &Camera, u: u32, v: u32) -> (Ray, f64) {
    let dc = camera.camera_direction(u as f64 + 0.5, v as f64 + 0.5);
    let inv_len = 1.0 / dc.norm();
    let pose = camera.pose();
    let ray = Ray {
        origin: *pose.translation(),
        direction: pose.rotation() * (dc * inv_len),
    };
    (ray, inv_len)
}

/// Parametric interval `(t_near, t_far)` of the ray inside the primitive,
/// clipped to `t >= 0`. `None` when the ray misses or the primitive lies
/// entirely behind the origin.
pub fn intersect_convex(ray: &Ray, p: &ConvexPrimitive) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for h in p.halfspaces() {
        let n = h.normal();
        let denom = n.dot(&ray.direction);
        let dist = h.offset() - n.dot(&ray.origin);
        if denom.abs() < 1e-15 {
            // Parallel to the plane: all or nothing.
            if dist < 0.0 {
                return None;
            }
            continue;
        }
        let t = dist / denom;
        if denom > 0.0 {
            t1 = t1.min(t);
        } else {
            t0 = t0.max(t);
        }
        if t0 > t1 {
            return None;
        }
    }
    if t1 < 0.0 {
        return None;
    }
    Some((t0.max(0.0), t1))
}

/// Renders z-depth and the front-most primitive per pixel.
///
/// Equal-distance hits resolve to the lexicographically smallest primitive
/// id, so the result does not depend on primitive order.
pub fn render_depth(scene: &Scene) -> (DepthMap, IdBuffer) {
    let camera = scene.camera();
    let prims = scene.primitives();
    let (w, h) = (camera.width(), camera.height());
    let rows: Vec<(Vec<f64>, Vec<Option<u32>>)> = (0..h)
        .into_par_iter()
        .map(|v| {
            let mut depth = Vec::with_capacity(w as usize);
            let mut ids = Vec::with_capacity(w as usize);
            for u in 0..w {
                let (ray, z_per_t) = center_ray(camera, u, v);
                let mut best: Option<(f64, usize)> = None;
                for (k, p) in prims.iter().enumerate() {
                    if let Some((t, _)) = intersect_convex(&ray, p) {
                        let better = match best {
                            None => true,
                            Some((bt, bk)) => t < bt || (t == bt && p.id() < prims[bk].id()),
                        };
                        if better {
                            best = Some((t, k));
                        }
                    }
                }
                match best {
                    Some((t, k)) => {
                        depth.push((t * z_per_t).max(NEAR_DEPTH));
                        ids.push(Some(k as u32));
                    }
                    None => {
                        depth.push(f64::INFINITY);
                        ids.push(None);
                    }
                }
            }
            (depth, ids)
        })
        .collect();
    let mut depth = Vec::with_capacity(w as usize * h as usize);
    let mut ids = Vec::with_capacity(w as usize * h as usize);
    for (d, i) in rows {
        depth.extend(d);
        ids.extend(i);
    }
    (
        DepthMap::from_parts_unchecked(w, h, depth),
        IdBuffer::from_parts(w, h, ids),
    )
}

/// Pixels whose rays hit any of the selected primitives, ignoring occlusion
/// by the others.
pub fn silhouette(scene: &Scene, ids: &BTreeSet<String>) -> Result<Mask, RaytraceError> {
    let mut selected = Vec::with_capacity(ids.len());
    for id in ids {
        selected.push(
            scene
                .primitive(id)
                .ok_or_else(|| RaytraceError::UnknownId(id.clone()))?,
        );
    }
    let camera = scene.camera();
    let (w, h) = (camera.width(), camera.height());
    if selected.is_empty() {
        return Ok(Mask::empty(w, h));
    }
    let bits: Vec<bool> = (0..h)
        .into_par_iter()
        .flat_map_iter(|v| {
            let selected = &selected;
            (0..w).map(move |u| {
                let (ray, _) = center_ray(camera, u, v);
                selected.iter().any(|p| intersect_convex(&ray, p).is_some())
            })
        })
        .collect();
    Ok(Mask::new(w, h, bits).expect("sized to raster"))
}

/// Back-projects every finite depth pixel to a world-space point.
pub fn unproject(depth: &DepthMap, camera: &Camera) -> Result<Vec<Vector3<f64>>, RaytraceError> {
    if depth.width() != camera.width() || depth.height() != camera.height() {
        return Err(RaytraceError::DimensionMismatch {
            depth_w: depth.width(),
            depth_h: depth.height(),
            cam_w: camera.width(),
            cam_h: camera.height(),
        });
    }
    let mut points = Vec::with_capacity(depth.finite_count());
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            let z = depth.get(u, v);
            if z.is_finite() {
                let p = camera.camera_direction(u as f64 + 0.5, v as f64 + 0.5) * z;
                points.push(camera.pose().to_world(&p));
            }
        }
    }
    Ok(points)
}
