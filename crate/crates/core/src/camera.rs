//! Pinhole camera with a rigid world-from-camera pose.
//!
//! Conventions: right-handed camera frame, +x right, +y down, +z along the
//! view axis. Pixel `(u, v)` covers `[u, u+1) x [v, v+1)`; its center is at
//! `(u + 0.5, v + 0.5)`.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Focal length (pixels) used when a dataset ships no calibration. This is the
/// widely used Kinect v1 calibration of the NYU Depth v2 captures.
pub const DEFAULT_FOCAL: f64 = 518.86;
pub const DEFAULT_WIDTH: u32 = 704;
pub const DEFAULT_HEIGHT: u32 = 512;
const ORTHO_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("focal lengths must be positive and finite (fx={fx}, fy={fy})")]
    Focal { fx: f64, fy: f64 },
    #[error("principal point ({cx}, {cy}) outside the {width}x{height} raster")]
    PrincipalPoint { cx: f64, cy: f64, width: u32, height: u32 },
    #[error("raster must be at least 1x1")]
    EmptyRaster,
    #[error("rotation is not orthonormal with determinant +1")]
    Rotation,
    #[error("non-finite pose translation")]
    Translation,
}

impl CameraError {
    pub fn code(&self) -> &'static str {
        match self {
            CameraError::Focal { .. } => "scene.camera_focal",
            CameraError::PrincipalPoint { .. } => "scene.camera_principal_point",
            CameraError::EmptyRaster => "scene.camera_raster",
            CameraError::Rotation => "scene.camera_rotation",
            CameraError::Translation => "scene.camera_translation",
        }
    }
}

/// Rigid transform, world-from-camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, CameraError> {
        if rotation.iter().any(|v| !v.is_finite()) {
            return Err(CameraError::Rotation);
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if ortho > ORTHO_TOL || (rotation.determinant() - 1.0).abs() > ORTHO_TOL {
            return Err(CameraError::Rotation);
        }
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(CameraError::Translation);
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    pub fn from_rotation(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation: *rotation.matrix(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    /// Camera center in world coordinates.
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn to_world(&self, p_cam: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p_cam + self.translation
    }

    pub fn to_camera(&self, p_world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p_world - self.translation)
    }

    /// View axis (+z of the camera) in world coordinates.
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation.column(2).into_owned()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Row-major 3x3 world-from-camera rotation.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCamera", into = "RawCamera")]
pub struct Camera {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    pose: Pose,
}

impl TryFrom<RawCamera> for Camera {
    type Error = CameraError;
    fn try_from(r: RawCamera) -> Result<Self, Self::Error> {
        let rot = Matrix3::from_row_slice(&r.rotation);
        let pose = Pose::new(rot, Vector3::from(r.translation))?;
        Camera::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height, pose)
    }
}

impl From<Camera> for RawCamera {
    fn from(c: Camera) -> Self {
        let m = c.pose.rotation;
        let mut rotation = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                rotation[3 * i + j] = m[(i, j)];
            }
        }
        RawCamera {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            rotation,
            translation: c.pose.translation.into(),
        }
    }
}

impl Camera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        pose: Pose,
    ) -> Result<Self, CameraError> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(CameraError::Focal { fx, fy });
        }
        if width == 0 || height == 0 {
            return Err(CameraError::EmptyRaster);
        }
        if !(cx >= 0.0 && cx < width as f64 && cy >= 0.0 && cy < height as f64) {
            return Err(CameraError::PrincipalPoint {
                cx,
                cy,
                width,
                height,
            });
        }
        Ok(Camera {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            pose,
        })
    }

    /// Default intrinsics for uncalibrated input: `fx = fy = 518.86`, principal
    /// point at the raster center, identity pose. Pixel `(u, v)` covers
    /// `[u, u + 1) x [v, v + 1)` in continuous coordinates.
    pub fn with_default_intrinsics(width: u32, height: u32) -> Result<Self, CameraError> {
        Camera::new(
            DEFAULT_FOCAL,
            DEFAULT_FOCAL,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            Pose::identity(),
        )
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn pose(&self) -> &Pose {
        &self.pose
    }

    pub fn with_pose(mut self, pose: Pose) -> Self {
        self.pose = pose;
        self
    }

    /// Unnormalized camera-frame direction `(x, y, 1)` through the continuous
    /// pixel position `(u, v)`.
    #[inline]
    pub fn camera_direction(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Projects a world point to continuous pixel coordinates and camera z.
    /// Points at or behind the camera plane give `None`.
    pub fn project(&self, p_world: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let p = self.pose.to_camera(p_world);
        if !(p.z > 0.0) {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy, p.z))
    }

    /// Camera for a raster scaled by `factor` (e.g. 0.5 for half-resolution
    /// previews), keeping the same field of view and pixel-center convention.
    pub fn scaled(&self, factor: f64) -> Result<Camera, CameraError> {
        let width = ((self.width as f64 * factor).floor() as u32).max(1);
        let height = ((self.height as f64 * factor).floor() as u32).max(1);
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        let cx = (self.cx * sx).min(width as f64 - 1e-9);
        let cy = (self.cy * sy).min(height as f64 - 1e-9);
        Camera::new(self.fx * sx, self.fy * sy, cx, cy, width, height, self.pose)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_intrinsics() {
        let p = Pose::identity();
        assert!(Camera::new(0.0, 1.0, 1.0, 1.0, 4, 4, p).is_err());
        assert!(Camera::new(1.0, 1.0, 4.0, 1.0, 4, 4, p).is_err());
        assert!(Camera::new(1.0, 1.0, 3.9, 0.0, 4, 4, p).is_ok());
    }

    #[test]
    fn rejects_reflection() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert_eq!(Pose::new(m, Vector3::zeros()), Err(CameraError::Rotation));
    }

    #[test]
    fn default_intrinsics_center() {
        let c = Camera::with_default_intrinsics(640, 480).unwrap();
        assert_eq!((c.cx(), c.cy()), (320.0, 240.0));
        assert_eq!(c.fx(), DEFAULT_FOCAL);
    }

    #[test]
    fn half_scale_keeps_center_ray() {
        let c = Camera::with_default_intrinsics(704, 512).unwrap();
        let h = c.scaled(0.5).unwrap();
        assert_eq!((h.width(), h.height()), (352, 256));
        // The optical axis still passes through the raster center.
        assert!((h.cx() - 176.0).abs() < 1e-12 && (h.cy() - 128.0).abs() < 1e-12);
    }
}
