//! Scene edits, texture badges and camera orbits.
//!
//! Every operation takes scenes by reference and returns new values.
//!
//! Edit scripts hold one operation per line; blank lines and lines starting
//! with `#` are ignored:
//!
//! ```text
//! translate <id> <dx> <dy> <dz>
//! add <primitive JSON on one line>
//! delete <id>
//! camera <r00> <r01> <r02> <r10> <r11> <r12> <r20> <r21> <r22> <tx> <ty> <tz>
//! prompt <text to end of line>
//! seed <u64>
//! ```

use std::collections::BTreeSet;
use std::io::Cursor;

use image::{ImageFormat, Rgb, RgbImage};
use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraError, Pose};
use crate::primitive::ConvexPrimitive;
use crate::raster::{Mask, RasterError};
use crate::raytrace::{silhouette, RaytraceError};
use crate::scene::Scene;

/// Dilation applied to move-badge masks, in pixels.
pub const DEFAULT_BADGE_DILATION: u32 = 4;

#[derive(Debug, Error)]
pub enum EditError {
    #[error("unknown primitive id `{0}`")]
    UnknownId(String),
    #[error("primitive id `{0}` already exists")]
    DuplicateId(String),
    #[error("adding a primitive would exceed the budget of {budget}")]
    BudgetExceeded { budget: usize },
    #[error("invalid camera pose: {0}")]
    Camera(#[from] CameraError),
    #[error("script line {line}: {message}")]
    Script { line: usize, message: String },
    #[error("raster size mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },
    #[error("badge needs at least one scene")]
    NoScene,
    #[error("fraction {0} outside [0, 1]")]
    Fraction(f64),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

impl EditError {
    pub fn code(&self) -> &'static str {
        match self {
            EditError::UnknownId(_) => "editor.unknown_id",
            EditError::DuplicateId(_) => "editor.duplicate_id",
            EditError::BudgetExceeded { .. } => "editor.budget_exceeded",
            EditError::Camera(_) => "editor.camera",
            EditError::Script { .. } => "editor.script",
            EditError::DimensionMismatch { .. } => "editor.dimension_mismatch",
            EditError::NoScene => "editor.no_scene",
            EditError::Fraction(_) => "editor.fraction",
            EditError::Raster(e) => e.code(),
        }
    }
}

impl From<RaytraceError> for EditError {
    fn from(e: RaytraceError) -> Self {
        match e {
            RaytraceError::UnknownId(id) => EditError::UnknownId(id),
            other => EditError::Script {
                line: 0,
                message: other.to_string(),
            },
        }
    }
}

/// One scene edit. JSON form is tagged by `op`, e.g.
/// `{"op": "translate_primitive", "id": "a", "delta": [1, 0, 0]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum EditOp {
    TranslatePrimitive { id: String, delta: [f64; 3] },
    AddPrimitive { primitive: ConvexPrimitive },
    DeletePrimitive { id: String },
    /// World-from-camera pose; rotation is row-major.
    SetCameraPose { rotation: [f64; 9], translation: [f64; 3] },
    SetPrompt { prompt: String },
    SetSeed { seed: u64 },
}

impl EditOp {
    pub fn camera_pose(pose: &Pose) -> EditOp {
        let r = pose.rotation();
        let t = pose.translation();
        EditOp::SetCameraPose {
            rotation: [
                r[(0, 0)], r[(0, 1)], r[(0, 2)],
                r[(1, 0)], r[(1, 1)], r[(1, 2)],
                r[(2, 0)], r[(2, 1)], r[(2, 2)],
            ],
            translation: [t.x, t.y, t.z],
        }
    }
}

pub fn apply_edit(scene: &Scene, op: &EditOp) -> Result<Scene, EditError> {
    let mut out = scene.clone();
    match op {
        EditOp::TranslatePrimitive { id, delta } => {
            let k = out.index_of(id).ok_or_else(|| EditError::UnknownId(id.clone()))?;
            let moved = out.primitives()[k].translated(&Vector3::from(*delta));
            out.primitives_mut()[k] = moved;
        }
        EditOp::AddPrimitive { primitive } => {
            if out.primitive(primitive.id()).is_some() {
                return Err(EditError::DuplicateId(primitive.id().to_string()));
            }
            if out.primitives().len() >= out.budget() {
                return Err(EditError::BudgetExceeded { budget: out.budget() });
            }
            out.primitives_mut().push(primitive.clone());
        }
        EditOp::DeletePrimitive { id } => {
            let k = out.index_of(id).ok_or_else(|| EditError::UnknownId(id.clone()))?;
            out.primitives_mut().remove(k);
        }
        EditOp::SetCameraPose { rotation, translation } => {
            let pose = Pose::new(Matrix3::from_row_slice(rotation), Vector3::from(*translation))?;
            let camera = out.camera().with_pose(pose);
            out.set_camera(camera);
        }
        EditOp::SetPrompt { prompt } => out.set_prompt(prompt.clone()),
        EditOp::SetSeed { seed } => out.set_seed(*seed),
    }
    Ok(out)
}

/// Applies `ops` in order. Fails on the first invalid op, reporting its
/// zero-based index.
pub fn apply_edits(scene: &Scene, ops: &[EditOp]) -> Result<Scene, (usize, EditError)> {
    let mut current = scene.clone();
    for (i, op) in ops.iter().enumerate() {
        current = apply_edit(&current, op).map_err(|e| (i, e))?;
    }
    Ok(current)
}

pub fn parse_script(text: &str) -> Result<Vec<EditOp>, EditError> {
    let mut ops = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| EditError::Script { line: i + 1, message };
        let (verb, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        let numbers = |n: usize| -> Result<Vec<f64>, EditError> {
            let v: Vec<f64> = rest
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| err(format!("bad number `{t}`"))))
                .collect::<Result<_, _>>()?;
            if v.len() != n {
                return Err(err(format!("`{verb}` takes {n} numbers, got {}", v.len())));
            }
            Ok(v)
        };
        let op = match verb {
            "translate" => {
                let (id, nums) = rest
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| err("usage: translate <id> <dx> <dy> <dz>".into()))?;
                let d: Vec<f64> = nums
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|_| err(format!("bad number `{t}`"))))
                    .collect::<Result<_, _>>()?;
                if d.len() != 3 {
                    return Err(err(format!("`translate` takes 3 numbers, got {}", d.len())));
                }
                EditOp::TranslatePrimitive {
                    id: id.to_string(),
                    delta: [d[0], d[1], d[2]],
                }
            }
            "add" => EditOp::AddPrimitive {
                primitive: serde_json::from_str(rest).map_err(|e| err(e.to_string()))?,
            },
            "delete" if !rest.is_empty() && !rest.contains(char::is_whitespace) => {
                EditOp::DeletePrimitive { id: rest.to_string() }
            }
            "delete" => return Err(err("usage: delete <id>".into())),
            "camera" => {
                let v = numbers(12)?;
                let mut rotation = [0.0; 9];
                rotation.copy_from_slice(&v[..9]);
                EditOp::SetCameraPose {
                    rotation,
                    translation: [v[9], v[10], v[11]],
                }
            }
            "prompt" => EditOp::SetPrompt { prompt: rest.to_string() },
            "seed" => EditOp::SetSeed {
                seed: rest.parse().map_err(|_| err(format!("bad seed `{rest}`")))?,
            },
            other => return Err(err(format!("unknown operation `{other}`"))),
        };
        ops.push(op);
    }
    Ok(ops)
}

/// Inverse of [`parse_script`]. Numbers use shortest round-trip formatting.
///
/// Prompts containing line breaks cannot be expressed and are flattened to
/// spaces.
pub fn format_script(ops: &[EditOp]) -> String {
    let mut out = String::new();
    for op in ops {
        let line = match op {
            EditOp::TranslatePrimitive { id, delta } => {
                format!("translate {id} {} {} {}", delta[0], delta[1], delta[2])
            }
            EditOp::AddPrimitive { primitive } => {
                format!("add {}", serde_json::to_string(primitive).expect("primitive serializes"))
            }
            EditOp::DeletePrimitive { id } => format!("delete {id}"),
            EditOp::SetCameraPose { rotation, translation } => {
                let nums: Vec<String> = rotation.iter().chain(translation).map(|v| v.to_string()).collect();
                format!("camera {}", nums.join(" "))
            }
            EditOp::SetPrompt { prompt } => format!("prompt {}", prompt.replace(['\n', '\r'], " ")),
            EditOp::SetSeed { seed } => format!("seed {seed}"),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Color hint image plus the mask of pixels the renderer must fill in.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureBadge {
    image: RgbImage,
    mask: Mask,
}

impl TextureBadge {
    pub fn new(image: RgbImage, mask: Mask) -> Result<Self, EditError> {
        if image.dimensions() != (mask.width(), mask.height()) {
            return Err(EditError::DimensionMismatch {
                expected: image.dimensions(),
                actual: (mask.width(), mask.height()),
            });
        }
        Ok(TextureBadge { image, mask })
    }

    pub fn image(&self) -> &RgbImage {
        &self.image
    }

    /// `true` marks removed pixels.
    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn width(&self) -> u32 {
        self.mask.width()
    }

    pub fn height(&self) -> u32 {
        self.mask.height()
    }

    /// The image with masked pixels set to black.
    pub fn blacked_out(&self) -> RgbImage {
        let mut out = self.image.clone();
        for (i, px) in out.pixels_mut().enumerate() {
            if self.mask.bits()[i] {
                *px = Rgb([0, 0, 0]);
            }
        }
        out
    }

    pub fn image_png(&self) -> Result<Vec<u8>, EditError> {
        Ok(encode_rgb_png(&self.image)?)
    }

    pub fn blacked_out_png(&self) -> Result<Vec<u8>, EditError> {
        Ok(encode_rgb_png(&self.blacked_out())?)
    }
}

pub fn encode_rgb_png(image: &RgbImage) -> Result<Vec<u8>, RasterError> {
    let mut out = Cursor::new(Vec::new());
    image.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn decode_rgb_png(bytes: &[u8]) -> Result<RgbImage, RasterError> {
    Ok(image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_rgb8())
}

fn check_raster(scene: &Scene, size: (u32, u32)) -> Result<(), EditError> {
    let actual = (scene.camera().width(), scene.camera().height());
    if actual != size {
        return Err(EditError::DimensionMismatch { expected: size, actual });
    }
    Ok(())
}

/// Badge for moving `moved_ids` from `before` to `after`: the union of both
/// silhouettes, dilated by `dilation` pixels.
///
/// For a deletion pass only `before`; for an addition only `after`.
pub fn move_badge(
    before: Option<&Scene>,
    after: Option<&Scene>,
    moved_ids: &BTreeSet<String>,
    image: &RgbImage,
    dilation: u32,
) -> Result<TextureBadge, EditError> {
    if before.is_none() && after.is_none() {
        return Err(EditError::NoScene);
    }
    let size = image.dimensions();
    let mut mask = Mask::empty(size.0, size.1);
    for scene in [before, after].into_iter().flatten() {
        check_raster(scene, size)?;
        mask = mask.union(&silhouette(scene, moved_ids)?);
    }
    TextureBadge::new(image.clone(), mask.dilate(dilation))
}

/// Badge masking a random subset of primitives, each chosen independently
/// with probability `fraction`.
pub fn random_badge(scene: &Scene, image: &RgbImage, fraction: f64, rng_seed: u64) -> Result<TextureBadge, EditError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(EditError::Fraction(fraction));
    }
    check_raster(scene, image.dimensions())?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let ids: BTreeSet<String> = scene
        .primitives()
        .iter()
        .filter(|_| rng.random_bool(fraction))
        .map(|p| p.id().to_string())
        .collect();
    TextureBadge::new(image.clone(), silhouette(scene, &ids)?)
}

/// Rotates the camera about `pivot` by `yaw` (about the camera's own y axis)
/// then `pitch` (about its x axis), then moves it `dolly` meters toward the
/// pivot. Primitives are unchanged.
pub fn orbit_camera(scene: &Scene, pivot: &Vector3<f64>, yaw: f64, pitch: f64, dolly: f64) -> Scene {
    let pose = scene.camera().pose();
    let r = pose.rotation();
    let local = Rotation3::from_axis_angle(&Vector3::y_axis(), yaw) * Rotation3::from_axis_angle(&Vector3::x_axis(), pitch);
    let delta = r * local.matrix() * r.transpose();
    let rotation = Rotation3::from_matrix(&(r * local.matrix()));
    let mut center = pivot + delta * (pose.translation() - pivot);
    if dolly != 0.0 {
        let to_pivot = pivot - center;
        let axis = if to_pivot.norm() > 0.0 {
            to_pivot.normalize()
        } else {
            rotation.matrix().column(2).into_owned()
        };
        center += axis * dolly;
    }
    let mut out = scene.clone();
    let camera = out.camera().with_pose(Pose::from_rotation(rotation, center));
    out.set_camera(camera);
    out
}
