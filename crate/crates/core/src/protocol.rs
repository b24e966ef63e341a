//! Render wire protocol (`b2w/1`) and the deterministic stub renderer.
//!
//! Request envelope (JSON object):
//!
//! | field             | type   | notes                                  |
//! |-------------------|--------|----------------------------------------|
//! | `version`         | string | `"b2w/1"`                              |
//! | `prompt`          | string |                                        |
//! | `seed`            | u64    |                                        |
//! | `width`, `height` | u32    | must match the depth raster            |
//! | `depth_b64`       | string | base64 of a `B2WD` depth raster        |
//! | `badge_image_b64` | string | optional, base64 RGB PNG               |
//! | `badge_mask_b64`  | string | optional, base64 grayscale PNG         |
//! | `hints`           | object | optional, passed through untouched     |
//!
//! The two badge fields come together or not at all. A successful response
//! is `{version, image_png_b64, renderer, elapsed_ms}`; a failure is
//! `{"error": {"code", "message"}}`.

use std::time::Instant;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use image::{Rgb, RgbImage};
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::edit::{decode_rgb_png, encode_rgb_png, TextureBadge};
use crate::raster::{DepthMap, Mask, RasterError};

pub const PROTOCOL_VERSION: &str = "b2w/1";
pub const STUB_RENDERER_ID: &str = "b2w-stub/1";

const REQUEST_FIELDS: [&str; 9] = [
    "version",
    "prompt",
    "seed",
    "width",
    "height",
    "depth_b64",
    "badge_image_b64",
    "badge_mask_b64",
    "hints",
];

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("body is not a JSON object: {0}")]
    Json(String),
    #[error("unsupported protocol version `{found}`")]
    Version { found: String },
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("field `{field}` must be {expected}")]
    FieldType {
        field: &'static str,
        expected: &'static str,
    },
    #[error("field `{0}` is not valid base64")]
    Base64(&'static str),
    #[error("field `{field}`: {source}")]
    Raster {
        field: &'static str,
        #[source]
        source: RasterError,
    },
    #[error("field `{field}`: raster is {actual:?}, expected {expected:?}")]
    DimensionMismatch {
        field: &'static str,
        expected: (u32, u32),
        actual: (u32, u32),
    },
    #[error("badge needs both `badge_image_b64` and `badge_mask_b64`; `{0}` is missing")]
    IncompleteBadge(&'static str),
}

impl ProtocolError {
    pub fn code(&self) -> &'static str {
        match self {
            ProtocolError::Json(_) => "render_bridge.json",
            ProtocolError::Version { .. } => "render_bridge.version",
            ProtocolError::MissingField(_) => "render_bridge.missing_field",
            ProtocolError::UnknownField(_) => "render_bridge.unknown_field",
            ProtocolError::FieldType { .. } => "render_bridge.field_type",
            ProtocolError::Base64(_) => "render_bridge.base64",
            ProtocolError::Raster { .. } => "render_bridge.raster",
            ProtocolError::DimensionMismatch { .. } => "render_bridge.dimension_mismatch",
            ProtocolError::IncompleteBadge(_) => "render_bridge.incomplete_badge",
        }
    }

    /// Field the error refers to, when there is one.
    pub fn field(&self) -> Option<&str> {
        match self {
            ProtocolError::Version { .. } => Some("version"),
            ProtocolError::MissingField(f)
            | ProtocolError::FieldType { field: f, .. }
            | ProtocolError::Base64(f)
            | ProtocolError::Raster { field: f, .. }
            | ProtocolError::DimensionMismatch { field: f, .. }
            | ProtocolError::IncompleteBadge(f) => Some(f),
            ProtocolError::UnknownField(f) => Some(f),
            ProtocolError::Json(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderRequest {
    pub prompt: String,
    pub seed: u64,
    /// Transmitted as `f32`; values not representable in `f32` are rounded.
    pub depth: DepthMap,
    pub badge: Option<TextureBadge>,
    /// Renderer hints such as step count or guidance scale.
    pub hints: Option<Map<String, Value>>,
}

impl RenderRequest {
    pub fn width(&self) -> u32 {
        self.depth.width()
    }

    pub fn height(&self) -> u32 {
        self.depth.height()
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if let Some(b) = &self.badge {
            let expected = (self.width(), self.height());
            let actual = (b.width(), b.height());
            if actual != expected {
                return Err(ProtocolError::DimensionMismatch {
                    field: "badge_image_b64",
                    expected,
                    actual,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderResult {
    pub image: RgbImage,
    pub renderer: String,
    pub elapsed_ms: u64,
}

/// Decoded response envelope.
#[derive(Debug, Clone, PartialEq)]
pub enum RenderResponse {
    Ok(RenderResult),
    Error { code: String, message: String },
}

#[derive(Serialize)]
struct RequestEnvelope<'a> {
    version: &'a str,
    prompt: &'a str,
    seed: u64,
    width: u32,
    height: u32,
    depth_b64: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    badge_image_b64: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    badge_mask_b64: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hints: Option<&'a Map<String, Value>>,
}

pub fn encode_request(req: &RenderRequest) -> Result<Vec<u8>, ProtocolError> {
    req.validate()?;
    let (badge_image_b64, badge_mask_b64) = match &req.badge {
        Some(b) => {
            let img = encode_rgb_png(b.image()).map_err(|source| ProtocolError::Raster {
                field: "badge_image_b64",
                source,
            })?;
            let mask = b.mask().to_png().map_err(|source| ProtocolError::Raster {
                field: "badge_mask_b64",
                source,
            })?;
            (Some(B64.encode(img)), Some(B64.encode(mask)))
        }
        None => (None, None),
    };
    let env = RequestEnvelope {
        version: PROTOCOL_VERSION,
        prompt: &req.prompt,
        seed: req.seed,
        width: req.width(),
        height: req.height(),
        depth_b64: B64.encode(req.depth.to_b2wd()),
        badge_image_b64,
        badge_mask_b64,
        hints: req.hints.as_ref(),
    };
    Ok(serde_json::to_vec(&env).expect("envelope serializes"))
}

fn parse_object(bytes: &[u8]) -> Result<Map<String, Value>, ProtocolError> {
    match serde_json::from_slice::<Value>(bytes) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(ProtocolError::Json("top-level value is not an object".into())),
        Err(e) => Err(ProtocolError::Json(e.to_string())),
    }
}

fn check_version(obj: &Map<String, Value>) -> Result<(), ProtocolError> {
    match obj.get("version") {
        None => Err(ProtocolError::MissingField("version")),
        Some(Value::String(v)) if v == PROTOCOL_VERSION => Ok(()),
        Some(Value::String(v)) => Err(ProtocolError::Version { found: v.clone() }),
        Some(_) => Err(ProtocolError::FieldType {
            field: "version",
            expected: "a string",
        }),
    }
}

fn get_str<'a>(obj: &'a Map<String, Value>, field: &'static str) -> Result<Option<&'a str>, ProtocolError> {
    match obj.get(field) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(ProtocolError::FieldType { field, expected: "a string" }),
    }
}

fn require_str<'a>(obj: &'a Map<String, Value>, field: &'static str) -> Result<&'a str, ProtocolError> {
    get_str(obj, field)?.ok_or(ProtocolError::MissingField(field))
}

fn require_u64(obj: &Map<String, Value>, field: &'static str) -> Result<u64, ProtocolError> {
    obj.get(field)
        .ok_or(ProtocolError::MissingField(field))?
        .as_u64()
        .ok_or(ProtocolError::FieldType {
            field,
            expected: "a non-negative integer",
        })
}

fn require_u32(obj: &Map<String, Value>, field: &'static str) -> Result<u32, ProtocolError> {
    u32::try_from(require_u64(obj, field)?).map_err(|_| ProtocolError::FieldType {
        field,
        expected: "a 32-bit unsigned integer",
    })
}

fn decode_b64(text: &str, field: &'static str) -> Result<Vec<u8>, ProtocolError> {
    B64.decode(text).map_err(|_| ProtocolError::Base64(field))
}

pub fn decode_request(bytes: &[u8]) -> Result<RenderRequest, ProtocolError> {
    let obj = parse_object(bytes)?;
    check_version(&obj)?;
    if let Some(k) = obj.keys().find(|k| !REQUEST_FIELDS.contains(&k.as_str())) {
        return Err(ProtocolError::UnknownField(k.clone()));
    }
    let prompt = require_str(&obj, "prompt")?.to_string();
    let seed = require_u64(&obj, "seed")?;
    let width = require_u32(&obj, "width")?;
    let height = require_u32(&obj, "height")?;
    let raw = decode_b64(require_str(&obj, "depth_b64")?, "depth_b64")?;
    let depth = DepthMap::from_b2wd(&raw).map_err(|source| ProtocolError::Raster {
        field: "depth_b64",
        source,
    })?;
    let expected = (width, height);
    if (depth.width(), depth.height()) != expected {
        return Err(ProtocolError::DimensionMismatch {
            field: "depth_b64",
            expected,
            actual: (depth.width(), depth.height()),
        });
    }

    let badge = match (get_str(&obj, "badge_image_b64")?, get_str(&obj, "badge_mask_b64")?) {
        (None, None) => None,
        (Some(_), None) => return Err(ProtocolError::IncompleteBadge("badge_mask_b64")),
        (None, Some(_)) => return Err(ProtocolError::IncompleteBadge("badge_image_b64")),
        (Some(img), Some(mask)) => {
            let image = decode_rgb_png(&decode_b64(img, "badge_image_b64")?).map_err(|source| {
                ProtocolError::Raster {
                    field: "badge_image_b64",
                    source,
                }
            })?;
            let mask = Mask::from_png(&decode_b64(mask, "badge_mask_b64")?).map_err(|source| {
                ProtocolError::Raster {
                    field: "badge_mask_b64",
                    source,
                }
            })?;
            for (field, actual) in [
                ("badge_image_b64", image.dimensions()),
                ("badge_mask_b64", (mask.width(), mask.height())),
            ] {
                if actual != expected {
                    return Err(ProtocolError::DimensionMismatch { field, expected, actual });
                }
            }
            Some(TextureBadge::new(image, mask).expect("dimensions checked"))
        }
    };

    let hints = match obj.get("hints") {
        None => None,
        Some(Value::Object(m)) => Some(m.clone()),
        Some(_) => {
            return Err(ProtocolError::FieldType {
                field: "hints",
                expected: "an object",
            })
        }
    };
    Ok(RenderRequest {
        prompt,
        seed,
        depth,
        badge,
        hints,
    })
}

#[derive(Serialize)]
struct ResultEnvelope<'a> {
    version: &'a str,
    image_png_b64: String,
    renderer: &'a str,
    elapsed_ms: u64,
}

pub fn encode_result(result: &RenderResult) -> Result<Vec<u8>, ProtocolError> {
    let png = encode_rgb_png(&result.image).map_err(|source| ProtocolError::Raster {
        field: "image_png_b64",
        source,
    })?;
    let env = ResultEnvelope {
        version: PROTOCOL_VERSION,
        image_png_b64: B64.encode(png),
        renderer: &result.renderer,
        elapsed_ms: result.elapsed_ms,
    };
    Ok(serde_json::to_vec(&env).expect("envelope serializes"))
}

pub fn encode_error(code: &str, message: &str) -> Vec<u8> {
    let v = serde_json::json!({ "error": { "code": code, "message": message } });
    serde_json::to_vec(&v).expect("error serializes")
}

pub fn decode_response(bytes: &[u8]) -> Result<RenderResponse, ProtocolError> {
    let obj = parse_object(bytes)?;
    if let Some(err) = obj.get("error") {
        let e = err.as_object().ok_or(ProtocolError::FieldType {
            field: "error",
            expected: "an object",
        })?;
        return Ok(RenderResponse::Error {
            code: require_str(e, "code")?.to_string(),
            message: require_str(e, "message")?.to_string(),
        });
    }
    check_version(&obj)?;
    let png = decode_b64(require_str(&obj, "image_png_b64")?, "image_png_b64")?;
    let image = decode_rgb_png(&png).map_err(|source| ProtocolError::Raster {
        field: "image_png_b64",
        source,
    })?;
    Ok(RenderResponse::Ok(RenderResult {
        image,
        renderer: require_str(&obj, "renderer")?.to_string(),
        elapsed_ms: require_u64(&obj, "elapsed_ms")?,
    }))
}

/// Brightness (HSV value, 0..=1) the stub assigns to each pixel: 0 for no
/// hit, otherwise `0.2 + 0.8 n` where `n` is inverse depth min-max
/// normalized over the finite pixels (1 when all are equal).
pub fn stub_brightness(depth: &DepthMap) -> Vec<f64> {
    let inv: Vec<f64> = depth.values().iter().map(|z| 1.0 / z).collect();
    let finite = inv.iter().zip(depth.values()).filter(|(_, z)| z.is_finite()).map(|(i, _)| *i);
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    inv.iter()
        .zip(depth.values())
        .map(|(i, z)| {
            if !z.is_finite() {
                0.0
            } else if hi > lo {
                0.2 + 0.8 * (i - lo) / (hi - lo)
            } else {
                1.0
            }
        })
        .collect()
}

/// Hue and saturation derived from SHA-256 of the prompt and seed.
pub fn stub_tint(prompt: &str, seed: u64) -> (f64, f64) {
    let mut h = Sha256::new();
    h.update(prompt.as_bytes());
    h.update([0u8]);
    h.update(seed.to_le_bytes());
    let d = h.finalize();
    let hue = u64::from_le_bytes(d[..8].try_into().expect("8 bytes")) as f64 / (u64::MAX as f64 + 1.0);
    let sat = 0.35 + 0.5 * d[8] as f64 / 255.0;
    (hue, sat)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> Rgb<u8> {
    let sector = h * 6.0;
    let i = sector.floor();
    let f = sector - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let (r, g, b) = match i as u8 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    let c = |x: f64| (x * 255.0).round().clamp(0.0, 255.0) as u8;
    Rgb([c(r), c(g), c(b)])
}

/// Deterministic stand-in for a statistical renderer: tinted inverse depth,
/// with every pixel outside the badge mask copied from the badge image.
pub fn stub_render(req: &RenderRequest) -> RenderResult {
    let start = Instant::now();
    let (w, h) = (req.width(), req.height());
    let brightness = stub_brightness(&req.depth);
    let (hue, sat) = stub_tint(&req.prompt, req.seed);
    let mut image = RgbImage::from_fn(w, h, |u, v| {
        hsv_to_rgb(hue, sat, brightness[v as usize * w as usize + u as usize])
    });
    if let Some(badge) = &req.badge {
        for (i, (out, src)) in image.pixels_mut().zip(badge.image().pixels()).enumerate() {
            if !badge.mask().bits()[i] {
                *out = *src;
            }
        }
    }
    RenderResult {
        image,
        renderer: STUB_RENDERER_ID.to_string(),
        elapsed_ms: start.elapsed().as_millis() as u64,
    }
}
