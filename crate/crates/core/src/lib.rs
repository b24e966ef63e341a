//! Convex-primitive scene toolkit.
//!
//! Scenes are ordered lists of convex primitives (bounded halfspace
//! intersections) seen through a pinhole camera. The crate fits primitives to
//! depth maps ([`decompose`]), ray traces them to conditioning depth maps and
//! masks ([`raytrace`]), edits scenes ([`edit`]), evaluates synthesized images
//! ([`metrics`]) and speaks the render wire protocol ([`protocol`]).

pub mod camera;
pub mod decompose;
pub mod edit;
pub mod lp;
pub mod metrics;
pub mod primitive;
pub mod protocol;
pub mod raster;
pub mod raytrace;
pub mod scene;
pub mod synthetic;

pub use camera::{Camera, CameraError, Pose};
pub use decompose::{decompose, FitConfig, FitReport};
pub use edit::{apply_edit, EditOp, TextureBadge};
pub use metrics::{ConfusionMatrix, DepthErrorReport};
pub use primitive::{Aabb, ConvexPrimitive, Halfspace, PrimitiveError};
pub use protocol::{RenderRequest, RenderResult};
pub use raster::{DepthMap, IdBuffer, Mask};
pub use raytrace::{render_depth, Ray};
pub use scene::{Scene, SceneError, DEFAULT_BUDGET, FORMAT_VERSION};

pub use nalgebra::{Matrix3, Vector3};

/// Pretty-printed JSON with object keys in sorted order.
///
/// Numbers use serde_json's shortest round-trippable formatting.
pub fn canonical_json(value: &serde_json::Value) -> String {
    let mut out = String::new();
    write_canonical(value, 0, &mut out);
    out
}

fn write_canonical(value: &serde_json::Value, indent: usize, out: &mut String) {
    use serde_json::Value;
    let pad = |n: usize, out: &mut String| {
        for _ in 0..n {
            out.push_str("  ");
        }
    };
    match value {
        Value::Array(items) if !items.is_empty() => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(indent + 1, out);
                write_canonical(item, indent + 1, out);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            pad(indent, out);
            out.push(']');
        }
        Value::Object(map) if !map.is_empty() => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                pad(indent + 1, out);
                out.push_str(&serde_json::to_string(k).expect("string serializes"));
                out.push_str(": ");
                write_canonical(&map[k.as_str()], indent + 1, out);
                if i + 1 < keys.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            pad(indent, out);
            out.push('}');
        }
        other => out.push_str(&serde_json::to_string(other).expect("value serializes")),
    }
}
