//! Row-major rasters: depth maps, primitive id buffers and binary masks, plus
//! their file formats.
//!
//! Depth binary format (`.b2wd`): 16-byte header of ASCII `B2WD`, then
//! little-endian `u32` width, `u32` height and a reserved `u32` (zero),
//! followed by `width * height` little-endian `f32` values, row-major.
//! Infinity marks pixels without a hit.

use std::io::Cursor;
use std::path::Path;

use image::{ImageBuffer, ImageFormat, Luma};
use thiserror::Error;

pub const DEPTH_MAGIC: &[u8; 4] = b"B2WD";
pub const DEPTH_HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("raster dimensions {width}x{height} do not match {len} values")]
    Shape { width: u32, height: u32, len: usize },
    #[error("depth value {value} at index {index} is neither positive nor +inf")]
    InvalidDepth { index: usize, value: f64 },
    #[error("bad depth raster magic")]
    Magic,
    #[error("truncated depth raster: {field} needs {expected} bytes, got {actual}")]
    Truncated {
        field: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("nonzero reserved header field")]
    Reserved,
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl RasterError {
    pub fn code(&self) -> &'static str {
        match self {
            RasterError::Shape { .. } => "raytracer.raster_shape",
            RasterError::InvalidDepth { .. } => "raytracer.invalid_depth",
            RasterError::Magic => "raytracer.depth_magic",
            RasterError::Truncated { .. } => "raytracer.depth_truncated",
            RasterError::Reserved => "raytracer.depth_reserved",
            RasterError::Image(_) => "raytracer.image",
            RasterError::Io(_) => "raytracer.io",
        }
    }
}

/// Camera-frame z-depth in meters; `+inf` where no surface was hit.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self, RasterError> {
        if values.len() != width as usize * height as usize {
            return Err(RasterError::Shape {
                width,
                height,
                len: values.len(),
            });
        }
        for (index, &value) in values.iter().enumerate() {
            if !(value > 0.0) {
                return Err(RasterError::InvalidDepth { index, value });
            }
        }
        Ok(DepthMap {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: u32, height: u32, value: f64) -> Result<Self, RasterError> {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    pub(crate) fn from_parts_unchecked(width: u32, height: u32, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), width as usize * height as usize);
        DepthMap {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn get(&self, u: u32, v: u32) -> f64 {
        self.values[v as usize * self.width as usize + u as usize]
    }

    pub fn finite_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_finite()).count()
    }

    /// Largest finite depth, if any.
    pub fn max_finite(&self) -> Option<f64> {
        self.values
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
    }

    pub fn min_finite(&self) -> Option<f64> {
        self.values
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(None, |m, v| Some(m.map_or(v, |m: f64| m.min(v))))
    }

    /// Values narrowed to `f32`, as transmitted and stored on disk.
    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }

    pub fn from_f32(width: u32, height: u32, values: &[f32]) -> Result<Self, RasterError> {
        Self::new(width, height, values.iter().map(|&v| v as f64).collect())
    }

    pub fn to_b2wd(&self) -> Vec<u8> {
        encode_b2wd(self.width, self.height, &self.to_f32())
    }

    pub fn from_b2wd(bytes: &[u8]) -> Result<Self, RasterError> {
        let (w, h, values) = decode_b2wd(bytes)?;
        Self::from_f32(w, h, &values)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, RasterError> {
        Self::from_b2wd(&std::fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        std::fs::write(path, self.to_b2wd())?;
        Ok(())
    }

    /// 16-bit grayscale PNG in millimeters, saturating at 65.535 m; no-hit
    /// pixels are written as 0.
    pub fn to_png16(&self) -> Result<Vec<u8>, RasterError> {
        let data: Vec<u16> = self
            .values
            .iter()
            .map(|&z| {
                if z.is_finite() {
                    (z * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16
                } else {
                    0
                }
            })
            .collect();
        encode_png16(self.width, self.height, data)
    }

    /// Inverse of [`DepthMap::to_png16`]: millimeters to meters, 0 to `+inf`.
    pub fn from_png16(bytes: &[u8]) -> Result<Self, RasterError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_luma16();
        let (w, h) = img.dimensions();
        let values = img
            .into_raw()
            .into_iter()
            .map(|mm| if mm == 0 { f64::INFINITY } else { mm as f64 / 1000.0 })
            .collect();
        Ok(Self::from_parts_unchecked(w, h, values))
    }
}

pub(crate) fn encode_png16(width: u32, height: u32, data: Vec<u16>) -> Result<Vec<u8>, RasterError> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width, height, data).expect("buffer sized to raster");
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn encode_b2wd(width: u32, height: u32, values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(DEPTH_HEADER_LEN + 4 * values.len());
    out.extend_from_slice(DEPTH_MAGIC);
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses a `B2WD` buffer without validating depth values.
pub fn decode_b2wd(bytes: &[u8]) -> Result<(u32, u32, Vec<f32>), RasterError> {
    if bytes.len() < DEPTH_HEADER_LEN {
        return Err(RasterError::Truncated {
            field: "header",
            expected: DEPTH_HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if &bytes[0..4] != DEPTH_MAGIC {
        return Err(RasterError::Magic);
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let (width, height, reserved) = (word(4), word(8), word(12));
    if reserved != 0 {
        return Err(RasterError::Reserved);
    }
    let expected = (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(4))
        .unwrap_or(usize::MAX);
    let payload = &bytes[DEPTH_HEADER_LEN..];
    if payload.len() != expected {
        return Err(RasterError::Truncated {
            field: "payload",
            expected,
            actual: payload.len(),
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((width, height, values))
}

/// Front-most primitive per pixel, stored as the primitive's position in the
/// scene's primitive list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdBuffer {
    width: u32,
    height: u32,
    slots: Vec<Option<u32>>,
}

impl IdBuffer {
    pub(crate) fn from_parts(width: u32, height: u32, slots: Vec<Option<u32>>) -> Self {
        debug_assert_eq!(slots.len(), width as usize * height as usize);
        IdBuffer {
            width,
            height,
            slots,
        }
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn slots(&self) -> &[Option<u32>] {
        &self.slots
    }
    pub fn get(&self, u: u32, v: u32) -> Option<u32> {
        self.slots[v as usize * self.width as usize + u as usize]
    }

    /// Pixels owned by the primitive at `slot`.
    pub fn footprint(&self, slot: u32) -> Mask {
        Mask::from_fn(self.width, self.height, |i| self.slots[i] == Some(slot))
    }

    /// 16-bit PNG: 0 for no primitive, slot + 1 otherwise.
    pub fn to_png16(&self) -> Result<Vec<u8>, RasterError> {
        let data = self
            .slots
            .iter()
            .map(|s| s.map_or(0, |s| (s + 1).min(u16::MAX as u32) as u16))
            .collect();
        encode_png16(self.width, self.height, data)
    }
}

/// Binary raster; `true` marks selected pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, RasterError> {
        if bits.len() != width as usize * height as usize {
            return Err(RasterError::Shape {
                width,
                height,
                len: bits.len(),
            });
        }
        Ok(Mask {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(usize) -> bool) -> Self {
        Mask {
            width,
            height,
            bits: (0..width as usize * height as usize).map(f).collect(),
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
    pub fn get(&self, u: u32, v: u32) -> bool {
        self.bits[v as usize * self.width as usize + u as usize]
    }
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn union(&self, other: &Mask) -> Mask {
        assert_eq!((self.width, self.height), (other.width, other.height));
        Mask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
        }
    }

    /// True where every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    /// Square (Chebyshev) dilation by `radius` pixels, done as two separable
    /// passes.
    pub fn dilate(&self, radius: u32) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        let (w, h) = (self.width as usize, self.height as usize);
        let r = radius as usize;
        let mut horiz = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let lo = x.saturating_sub(r);
                let hi = (x + r).min(w - 1);
                horiz[y * w + x] = (lo..=hi).any(|xx| self.bits[y * w + xx]);
            }
        }
        let mut bits = vec![false; w * h];
        for y in 0..h {
            let lo = y.saturating_sub(r);
            let hi = (y + r).min(h - 1);
            for x in 0..w {
                bits[y * w + x] = (lo..=hi).any(|yy| horiz[yy * w + x]);
            }
        }
        Mask {
            width: self.width,
            height: self.height,
            bits,
        }
    }

    /// 8-bit grayscale PNG, 255 for set pixels.
    pub fn to_png(&self) -> Result<Vec<u8>, RasterError> {
        let img: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(
            self.width,
            self.height,
            self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        )
        .expect("buffer sized to raster");
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    /// Decodes a grayscale (or any) PNG; pixels with luma >= 128 are set.
    pub fn from_png(bytes: &[u8]) -> Result<Mask, RasterError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_luma8();
        let (w, h) = img.dimensions();
        Ok(Mask {
            width: w,
            height: h,
            bits: img.into_raw().into_iter().map(|v| v >= 128).collect(),
        })
    }
}
