//! Depth error metrics after scale-shift alignment, and balanced accuracy of
//! scene-label predictions.
//!
//! Over the evaluated pixel set P (finite in both maps, reference > 0):
//!
//! - AbsRel = mean |p - r| / r
//! - RMSE   = sqrt(mean (p - r)^2)
//! - RMSLE  = sqrt(mean (ln max(p, 1e-3) - ln r)^2)

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{DepthMap, Mask, RasterError};

/// Floor applied to predictions before taking logs (m).
pub const LOG_FLOOR: f64 = 1e-3;

/// Published per-class depth errors of the trained renderer against a
/// monocular estimate, as `(label, AbsRel, RMSE, RMSLE)`. For comparison only.
pub const REFERENCE_ROWS: [(&str, f64, f64, f64); 6] = [
    ("bedroom", 0.131, 0.441, 0.115),
    ("kitchen", 0.137, 0.476, 0.122),
    ("living room", 0.139, 0.451, 0.121),
    ("bathroom", 0.156, 0.537, 0.135),
    ("dining room", 0.141, 0.473, 0.124),
    ("office", 0.135, 0.460, 0.121),
];
pub const REFERENCE_AVERAGE: (f64, f64, f64) = (0.140, 0.473, 0.123);
/// Published balanced accuracy (percent) of synthesized images, and of the
/// scene classifier on real images.
pub const REFERENCE_BACC: f64 = 76.80;
pub const REFERENCE_CLASSIFIER_BACC: f64 = 76.46;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("raster sizes differ: {pred:?} vs {reference:?}")]
    DimensionMismatch {
        pred: (u32, u32),
        reference: (u32, u32),
    },
    #[error("no pixel is finite in both maps")]
    EmptyMask,
    #[error("no label pairs")]
    NoPairs,
    #[error("label `{0}` is not a declared class")]
    UnknownLabel(String),
    #[error("class `{0}` declared twice")]
    DuplicateClass(String),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

impl MetricsError {
    pub fn code(&self) -> &'static str {
        match self {
            MetricsError::DimensionMismatch { .. } => "metrics.dimension_mismatch",
            MetricsError::EmptyMask => "metrics.empty_mask",
            MetricsError::NoPairs => "metrics.no_pairs",
            MetricsError::UnknownLabel(_) => "metrics.unknown_label",
            MetricsError::DuplicateClass(_) => "metrics.duplicate_class",
            MetricsError::Manifest { .. } => "metrics.manifest",
            MetricsError::Raster(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleShift {
    pub scale: f64,
    pub shift: f64,
    /// Prediction was constant over the mask; scale is 0 and shift the
    /// reference mean.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthErrorReport {
    pub abs_rel: f64,
    pub rmse: f64,
    pub rmsle: f64,
    pub pixels: usize,
    pub scale: f64,
    pub shift: f64,
    pub degenerate: bool,
}

fn check_dims(pred: &DepthMap, reference: &DepthMap) -> Result<(), MetricsError> {
    let (a, b) = ((pred.width(), pred.height()), (reference.width(), reference.height()));
    if a != b {
        return Err(MetricsError::DimensionMismatch { pred: a, reference: b });
    }
    Ok(())
}

/// Index set where both maps are finite, the reference positive and `mask`
/// (when given) set.
fn valid_pixels(pred: &DepthMap, reference: &DepthMap, mask: Option<&Mask>) -> Vec<usize> {
    pred.values()
        .iter()
        .zip(reference.values())
        .enumerate()
        .filter(|(i, (p, r))| p.is_finite() && r.is_finite() && **r > 0.0 && mask.is_none_or(|m| m.bits()[*i]))
        .map(|(i, _)| i)
        .collect()
}

fn solve_scale_shift(p: &[f64], r: &[f64]) -> ScaleShift {
    let n = p.len() as f64;
    let mp = p.iter().sum::<f64>() / n;
    let mr = r.iter().sum::<f64>() / n;
    let (mut cov, mut var) = (0.0, 0.0);
    for (a, b) in p.iter().zip(r) {
        cov += (a - mp) * (b - mr);
        var += (a - mp) * (a - mp);
    }
    // Rounding in the mean leaves a residual variance of order eps^2 mp^2.
    let noise = n * (16.0 * f64::EPSILON * mp.abs()).powi(2);
    if !(var > noise) {
        return ScaleShift { scale: 0.0, shift: mr, degenerate: true };
    }
    let scale = cov / var;
    ScaleShift { scale, shift: mr - scale * mp, degenerate: false }
}

/// Least-squares `(s, t)` minimizing `sum (s p + t - r)^2` over valid pixels.
pub fn fit_scale_shift(pred: &DepthMap, reference: &DepthMap, mask: Option<&Mask>) -> Result<ScaleShift, MetricsError> {
    check_dims(pred, reference)?;
    let idx = valid_pixels(pred, reference, mask);
    if idx.is_empty() {
        return Err(MetricsError::EmptyMask);
    }
    let p: Vec<f64> = idx.iter().map(|&i| pred.values()[i]).collect();
    let r: Vec<f64> = idx.iter().map(|&i| reference.values()[i]).collect();
    Ok(solve_scale_shift(&p, &r))
}

/// AbsRel, RMSE and RMSLE of `pred` against `reference`, optionally after
/// aligning `pred` by [`fit_scale_shift`].
pub fn depth_errors(pred: &DepthMap, reference: &DepthMap, align: bool) -> Result<DepthErrorReport, MetricsError> {
    check_dims(pred, reference)?;
    let idx = valid_pixels(pred, reference, None);
    if idx.is_empty() {
        return Err(MetricsError::EmptyMask);
    }
    let p: Vec<f64> = idx.iter().map(|&i| pred.values()[i]).collect();
    let r: Vec<f64> = idx.iter().map(|&i| reference.values()[i]).collect();
    let fit = if align {
        solve_scale_shift(&p, &r)
    } else {
        ScaleShift { scale: 1.0, shift: 0.0, degenerate: false }
    };
    let (mut abs_rel, mut sq, mut sq_log) = (0.0, 0.0, 0.0);
    for (a, b) in p.iter().zip(&r) {
        let a = if align { fit.scale * a + fit.shift } else { *a };
        abs_rel += (a - b).abs() / b;
        sq += (a - b) * (a - b);
        let dl = a.max(LOG_FLOOR).ln() - b.ln();
        sq_log += dl * dl;
    }
    let n = p.len() as f64;
    Ok(DepthErrorReport {
        abs_rel: abs_rel / n,
        rmse: (sq / n).sqrt(),
        rmsle: (sq_log / n).sqrt(),
        pixels: p.len(),
        scale: fit.scale,
        shift: fit.shift,
        degenerate: fit.degenerate,
    })
}

/// Counts of requested (row) against predicted (column) labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Result<Self, MetricsError> {
        let mut seen = BTreeSet::new();
        for c in &classes {
            if !seen.insert(c) {
                return Err(MetricsError::DuplicateClass(c.clone()));
            }
        }
        let n = classes.len();
        Ok(ConfusionMatrix { classes, counts: vec![vec![0; n]; n] })
    }

    fn index(&self, label: &str) -> Result<usize, MetricsError> {
        self.classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| MetricsError::UnknownLabel(label.to_string()))
    }

    pub fn record(&mut self, requested: &str, predicted: &str) -> Result<(), MetricsError> {
        let (i, j) = (self.index(requested)?, self.index(predicted)?);
        self.counts[i][j] += 1;
        Ok(())
    }

    /// Mean recall over classes with at least one requested sample, in
    /// percent. `None` when the matrix is empty.
    pub fn balanced_accuracy(&self) -> Option<f64> {
        let recalls: Vec<f64> = self
            .counts
            .iter()
            .enumerate()
            .filter_map(|(i, row)| {
                let total: u64 = row.iter().sum();
                (total > 0).then(|| row[i] as f64 / total as f64)
            })
            .collect();
        if recalls.is_empty() {
            return None;
        }
        Some(100.0 * recalls.iter().sum::<f64>() / recalls.len() as f64)
    }
}

/// Confusion matrix over `classes` and balanced accuracy in percent.
pub fn confusion_and_bacc(
    classes: &[String],
    pairs: &[(String, String)],
) -> Result<(ConfusionMatrix, f64), MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::NoPairs);
    }
    let mut m = ConfusionMatrix::new(classes.to_vec())?;
    for (req, pred) in pairs {
        m.record(req, pred)?;
    }
    let bacc = m.balanced_accuracy().expect("nonempty");
    Ok((m, bacc))
}

/// One manifest line: the primitive depth map (reference), the depth inferred
/// from the synthesized image, the requested label and the predicted label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub primitive_depth: PathBuf,
    pub inferred_depth: PathBuf,
    pub requested: String,
    pub predicted: String,
}

/// Parses a comma-separated manifest without a header. `#` starts a comment
/// line; relative paths are resolved against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestItem>, MetricsError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut items = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| MetricsError::Manifest {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 4 {
            return Err(MetricsError::Manifest {
                line,
                message: format!("expected 4 fields, got {}", rec.len()),
            });
        }
        let path = |s: &str| {
            let p = PathBuf::from(s);
            if p.is_relative() {
                base.join(p)
            } else {
                p
            }
        };
        items.push(ManifestItem {
            primitive_depth: path(&rec[0]),
            inferred_depth: path(&rec[1]),
            requested: rec[2].to_string(),
            predicted: rec[3].to_string(),
        });
    }
    Ok(items)
}

/// Reads a depth map from `.b2wd`, or from a 16-bit millimeter `.png`.
pub fn read_depth(path: &Path) -> Result<DepthMap, MetricsError> {
    let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        Ok(DepthMap::from_png16(&std::fs::read(path).map_err(RasterError::from)?)?)
    } else {
        Ok(DepthMap::read(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub index: usize,
    pub requested: String,
    pub predicted: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub errors: Option<DepthErrorReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Means over images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanErrors {
    pub abs_rel: f64,
    pub rmse: f64,
    pub rmsle: f64,
    pub images: usize,
}

impl MeanErrors {
    fn of<'a>(reports: impl Iterator<Item = &'a DepthErrorReport>) -> Option<MeanErrors> {
        let (mut a, mut b, mut c, mut n) = (0.0, 0.0, 0.0, 0usize);
        for r in reports {
            a += r.abs_rel;
            b += r.rmse;
            c += r.rmsle;
            n += 1;
        }
        (n > 0).then(|| {
            let k = n as f64;
            MeanErrors { abs_rel: a / k, rmse: b / k, rmsle: c / k, images: n }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub aligned: bool,
    pub items: Vec<ItemResult>,
    pub failures: usize,
    /// Keyed by requested label.
    pub per_class: BTreeMap<String, MeanErrors>,
    pub overall: Option<MeanErrors>,
    pub confusion: Option<ConfusionMatrix>,
    pub balanced_accuracy: Option<f64>,
}

/// Evaluates every manifest item; items whose depth files fail to load or
/// compare are recorded and skipped. Classes are the sorted set of labels
/// appearing in the manifest.
pub fn evaluate_batch(items: &[ManifestItem], align: bool) -> BatchReport {
    let results: Vec<ItemResult> = items
        .par_iter()
        .enumerate()
        .map(|(index, item)| {
            let outcome = read_depth(&item.primitive_depth)
                .and_then(|reference| {
                    let pred = read_depth(&item.inferred_depth)?;
                    depth_errors(&pred, &reference, align)
                });
            let (errors, failure) = match outcome {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(format!("{}: {e}", e.code()))),
            };
            ItemResult {
                index,
                requested: item.requested.clone(),
                predicted: item.predicted.clone(),
                errors,
                failure,
            }
        })
        .collect();

    let classes: Vec<String> = items
        .iter()
        .flat_map(|i| [i.requested.clone(), i.predicted.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let pairs: Vec<(String, String)> = items.iter().map(|i| (i.requested.clone(), i.predicted.clone())).collect();
    let (confusion, balanced_accuracy) = match confusion_and_bacc(&classes, &pairs) {
        Ok((m, b)) => (Some(m), Some(b)),
        Err(_) => (None, None),
    };
    let per_class = classes
        .iter()
        .filter_map(|c| {
            MeanErrors::of(results.iter().filter(|r| &r.requested == c).filter_map(|r| r.errors.as_ref()))
                .map(|m| (c.clone(), m))
        })
        .collect();
    BatchReport {
        aligned: align,
        failures: results.iter().filter(|r| r.failure.is_some()).count(),
        overall: MeanErrors::of(results.iter().filter_map(|r| r.errors.as_ref())),
        items: results,
        per_class,
        confusion,
        balanced_accuracy,
    }
}

impl BatchReport {
    pub fn to_document(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut s = crate::canonical_json(&value);
        s.push('\n');
        s
    }

    /// Plain-text table with columns Cfg., AbsRel, RMSE, RMSLE, followed by
    /// the published reference average and balanced accuracy.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let row = |out: &mut String, name: &str, a: f64, b: f64, c: f64| {
            let _ = writeln!(out, "{name:<16} {a:>7.3} {b:>7.3} {c:>7.3}");
        };
        let _ = writeln!(out, "{:<16} {:>7} {:>7} {:>7}", "Cfg.", "AbsRel", "RMSE", "RMSLE");
        for (class, m) in &self.per_class {
            row(&mut out, class, m.abs_rel, m.rmse, m.rmsle);
        }
        if let Some(m) = &self.overall {
            row(&mut out, "Avg.", m.abs_rel, m.rmse, m.rmsle);
        }
        let (a, b, c) = REFERENCE_AVERAGE;
        row(&mut out, "Reference avg.", a, b, c);
        match self.balanced_accuracy {
            Some(bacc) => {
                let _ = writeln!(out, "bAcc {bacc:.2} (reference {REFERENCE_BACC:.2})");
            }
            None => {
                let _ = writeln!(out, "bAcc n/a (reference {REFERENCE_BACC:.2})");
            }
        }
        if self.failures > 0 {
            let _ = writeln!(out, "{} item(s) failed", self.failures);
        }
        out
    }
}
