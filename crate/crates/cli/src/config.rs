//! TOML configuration files for the camera and the fit.
//!
//! Camera file:
//!
//! ```toml
//! fx = 518.86
//! fy = 518.86
//! cx = 352.0
//! cy = 256.0
//! width = 704
//! height = 512
//! # optional, world-from-camera
//! rotation = [1, 0, 0, 0, 1, 0, 0, 0, 1]
//! translation = [0, 0, 0]
//! ```
//!
//! Fit file: any subset of the [`FitConfig`] fields, e.g. `iterations = 500`.

use std::path::Path;

use b2w_core::camera::{Camera, Pose};
use b2w_core::decompose::FitConfig;
use b2w_core::{Matrix3, Vector3};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    #[serde(default = "identity_rotation")]
    pub rotation: [f64; 9],
    #[serde(default)]
    pub translation: [f64; 3],
}

fn identity_rotation() -> [f64; 9] {
    [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]
}

impl CameraConfig {
    pub fn to_camera(&self) -> Result<Camera, CliError> {
        let pose = Pose::new(Matrix3::from_row_slice(&self.rotation), Vector3::from(self.translation))?;
        Ok(Camera::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height, pose)?)
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn parse_camera(text: &str) -> Result<Camera, CliError> {
    let cfg: CameraConfig = toml::from_str(text).map_err(|e| CliError::new("cli.config", e.to_string()))?;
    cfg.to_camera()
}

pub fn load_camera(path: &Path) -> Result<Camera, CliError> {
    parse_camera(&read_text(path)?).map_err(|e| CliError::new(e.code, format!("{}: {}", path.display(), e.message)))
}

pub fn parse_fit(text: &str) -> Result<FitConfig, CliError> {
    let cfg: FitConfig = toml::from_str(text).map_err(|e| CliError::new("cli.config", e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_fit(path: &Path) -> Result<FitConfig, CliError> {
    parse_fit(&read_text(path)?).map_err(|e| CliError::new(e.code, format!("{}: {}", path.display(), e.message)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn camera_defaults_to_identity_pose() {
        let c = parse_camera("fx = 500.0\nfy = 500.0\ncx = 32.0\ncy = 24.0\nwidth = 64\nheight = 48\n").unwrap();
        assert_eq!(c.pose(), &Pose::identity());
        assert_eq!((c.width(), c.height()), (64, 48));
    }

    #[test]
    fn bad_camera_reports_code() {
        let e = parse_camera("fx = -1.0\nfy = 500.0\ncx = 32.0\ncy = 24.0\nwidth = 64\nheight = 48\n").unwrap_err();
        assert_eq!(e.code, "scene.camera_focal");
        let e = parse_camera("fx = 1.0\nbogus = 2\n").unwrap_err();
        assert_eq!(e.code, "cli.config");
    }

    #[test]
    fn partial_fit_file() {
        let f = parse_fit("iterations = 12\nbudget = 3\n").unwrap();
        assert_eq!((f.iterations, f.budget), (12, 3));
        assert_eq!(f.sharpness, FitConfig::default().sharpness);
        assert_eq!(parse_fit("budget = 0\n").unwrap_err().code, "decomposer.config");
    }
}
