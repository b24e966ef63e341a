//! Convex primitives in halfspace form.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{self, LpOutcome};

/// Tolerance on `|normal| = 1`.
pub const UNIT_TOL: f64 = 1e-9;
/// Largest accepted condition number for a parallelepiped basis.
pub const MAX_BASIS_CONDITION: f64 = 1e8;
/// Smallest inscribed-ball radius (meters) for a primitive to count as solid.
pub const MIN_INTERIOR_RADIUS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrimitiveError {
    #[error("halfspace normal has length {0}, expected 1")]
    NonUnitNormal(f64),
    #[error("non-finite halfspace parameter")]
    NonFinite,
    #[error("primitive {id:?} has {count} halfspaces, at least 4 are required")]
    TooFewHalfspaces { id: String, count: usize },
    #[error("primitive {0:?} is unbounded")]
    Unbounded(String),
    #[error("primitive {0:?} is empty or has no interior")]
    Empty(String),
    #[error("parallelepiped basis is singular or ill-conditioned (condition number {0:e})")]
    SingularBasis(f64),
    #[error("primitive id must be non-empty and contain no whitespace: {0:?}")]
    InvalidId(String),
}

impl PrimitiveError {
    pub fn code(&self) -> &'static str {
        match self {
            PrimitiveError::NonUnitNormal(_) => "scene.non_unit_normal",
            PrimitiveError::NonFinite => "scene.non_finite",
            PrimitiveError::TooFewHalfspaces { .. } => "scene.too_few_halfspaces",
            PrimitiveError::Unbounded(_) => "scene.unbounded_primitive",
            PrimitiveError::Empty(_) => "scene.empty_primitive",
            PrimitiveError::SingularBasis(_) => "scene.singular_basis",
            PrimitiveError::InvalidId(_) => "scene.invalid_id",
        }
    }
}

/// Closed halfspace `normal · x - offset <= 0` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHalfspace", into = "RawHalfspace")]
pub struct Halfspace {
    normal: Vector3<f64>,
    offset: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHalfspace {
    normal: [f64; 3],
    offset: f64,
}

impl TryFrom<RawHalfspace> for Halfspace {
    type Error = PrimitiveError;
    fn try_from(raw: RawHalfspace) -> Result<Self, Self::Error> {
        Halfspace::new(Vector3::from(raw.normal), raw.offset)
    }
}

impl From<Halfspace> for RawHalfspace {
    fn from(h: Halfspace) -> Self {
        RawHalfspace {
            normal: h.normal.into(),
            offset: h.offset,
        }
    }
}

impl Halfspace {
    pub fn new(normal: Vector3<f64>, offset: f64) -> Result<Self, PrimitiveError> {
        if !offset.is_finite() || normal.iter().any(|v| !v.is_finite()) {
            return Err(PrimitiveError::NonFinite);
        }
        let len = normal.norm();
        if (len - 1.0).abs() > UNIT_TOL {
            return Err(PrimitiveError::NonUnitNormal(len));
        }
        Ok(Halfspace { normal, offset })
    }

    /// Scales an arbitrary plane `n · x <= d` to unit-normal form.
    pub fn normalized(normal: Vector3<f64>, offset: f64) -> Result<Self, PrimitiveError> {
        let len = normal.norm();
        if !(len > 0.0) || !len.is_finite() || !offset.is_finite() {
            return Err(PrimitiveError::NonFinite);
        }
        Halfspace::new(normal / len, offset / len)
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Signed distance of `x` to the boundary plane, positive outside.
    #[inline]
    pub fn signed_distance(&self, x: &Vector3<f64>) -> f64 {
        self.normal.dot(x) - self.offset
    }

    /// The same halfspace moved by `delta`.
    pub fn translated(&self, delta: &Vector3<f64>) -> Halfspace {
        Halfspace {
            normal: self.normal,
            offset: self.offset + self.normal.dot(delta),
        }
    }
}

/// Axis-aligned bounds of a primitive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn extents(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn volume(&self) -> f64 {
        let e = self.extents();
        e.x * e.y * e.z
    }
}

/// A bounded, non-empty intersection of halfspaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPrimitive", into = "RawPrimitive")]
pub struct ConvexPrimitive {
    id: String,
    halfspaces: Vec<Halfspace>,
    label: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrimitive {
    id: String,
    halfspaces: Vec<Halfspace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

impl TryFrom<RawPrimitive> for ConvexPrimitive {
    type Error = PrimitiveError;
    fn try_from(raw: RawPrimitive) -> Result<Self, Self::Error> {
        ConvexPrimitive::new(raw.id, raw.halfspaces, raw.label)
    }
}

impl From<ConvexPrimitive> for RawPrimitive {
    fn from(p: ConvexPrimitive) -> Self {
        RawPrimitive {
            id: p.id,
            halfspaces: p.halfspaces,
            label: p.label,
        }
    }
}

/// Negation without signed zeros, so documents never show `-0.0`.
fn negate(v: &Vector3<f64>) -> Vector3<f64> {
    v.map(|x| if x == 0.0 { 0.0 } else { -x })
}

fn check_id(id: &str) -> Result<(), PrimitiveError> {
    if id.is_empty() || id.chars().any(char::is_whitespace) {
        return Err(PrimitiveError::InvalidId(id.to_string()));
    }
    Ok(())
}

impl ConvexPrimitive {
    /// Validates boundedness and a non-empty interior before accepting the set.
    pub fn new(
        id: impl Into<String>,
        halfspaces: Vec<Halfspace>,
        label: Option<String>,
    ) -> Result<Self, PrimitiveError> {
        let id = id.into();
        check_id(&id)?;
        if halfspaces.len() < 4 {
            return Err(PrimitiveError::TooFewHalfspaces {
                id,
                count: halfspaces.len(),
            });
        }
        match interior_radius(&halfspaces) {
            Some(r) if r > MIN_INTERIOR_RADIUS => {}
            _ => return Err(PrimitiveError::Empty(id)),
        }
        if bounds_of(&halfspaces).is_none() {
            return Err(PrimitiveError::Unbounded(id));
        }
        Ok(ConvexPrimitive {
            id,
            halfspaces,
            label,
        })
    }

    /// Parallelepiped `{x : max|basis⁻¹ (x - center)| <= 1}`.
    ///
    /// The columns of `basis` are half-axis vectors. Halfspaces come out in
    /// antipodal pairs ordered (+a0, -a0, +a1, -a1, +a2, -a2).
    pub fn parallelepiped(
        id: impl Into<String>,
        center: Vector3<f64>,
        basis: Matrix3<f64>,
    ) -> Result<Self, PrimitiveError> {
        let id = id.into();
        check_id(&id)?;
        if center.iter().chain(basis.iter()).any(|v| !v.is_finite()) {
            return Err(PrimitiveError::NonFinite);
        }
        let sv = basis.singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(cond < MAX_BASIS_CONDITION) {
            return Err(PrimitiveError::SingularBasis(cond));
        }
        let inv = basis
            .try_inverse()
            .ok_or(PrimitiveError::SingularBasis(cond))?;
        let mut halfspaces = Vec::with_capacity(6);
        for i in 0..3 {
            let row: Vector3<f64> = inv.row(i).transpose();
            let len = row.norm();
            let n = row / len;
            let c = n.dot(&center);
            let d = 1.0 / len;
            halfspaces.push(Halfspace::new(n, d + c)?);
            halfspaces.push(Halfspace::new(negate(&n), d - c)?);
        }
        Ok(ConvexPrimitive {
            id,
            halfspaces,
            label: None,
        })
    }

    /// Axis-aligned box from a center and positive half extents.
    pub fn axis_box(
        id: impl Into<String>,
        center: Vector3<f64>,
        half_extents: Vector3<f64>,
    ) -> Result<Self, PrimitiveError> {
        let id = id.into();
        check_id(&id)?;
        if center.iter().chain(half_extents.iter()).any(|v| !v.is_finite()) {
            return Err(PrimitiveError::NonFinite);
        }
        if !(half_extents.min() > 0.0) {
            return Err(PrimitiveError::Empty(id));
        }
        // Offsets are formed directly so dyadic inputs stay exact.
        let mut halfspaces = Vec::with_capacity(6);
        for i in 0..3 {
            let e = Vector3::ith(i, 1.0);
            halfspaces.push(Halfspace::new(e, half_extents[i] + center[i])?);
            halfspaces.push(Halfspace::new(negate(&e), half_extents[i] - center[i])?);
        }
        Ok(ConvexPrimitive {
            id,
            halfspaces,
            label: None,
        })
    }

    pub fn with_label(mut self, label: Option<String>) -> Self {
        self.label = label;
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Result<Self, PrimitiveError> {
        let id = id.into();
        check_id(&id)?;
        self.id = id;
        Ok(self)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    /// True iff every halfspace is satisfied.
    pub fn contains(&self, x: &Vector3<f64>) -> bool {
        self.halfspaces.iter().all(|h| h.signed_distance(x) <= 0.0)
    }

    /// The primitive moved by `delta`; every offset shifts by `normal · delta`.
    pub fn translated(&self, delta: &Vector3<f64>) -> ConvexPrimitive {
        ConvexPrimitive {
            id: self.id.clone(),
            halfspaces: self.halfspaces.iter().map(|h| h.translated(delta)).collect(),
            label: self.label.clone(),
        }
    }

    /// Tight axis-aligned bounds from six linear programs.
    pub fn bounds(&self) -> Aabb {
        bounds_of(&self.halfspaces).expect("validated primitive is bounded")
    }
}

/// Inscribed-ball radius (capped) of a halfspace set, `None` when infeasible.
fn interior_radius(halfspaces: &[Halfspace]) -> Option<f64> {
    const RADIUS_CAP: f64 = 1e6;
    let mut a: Vec<Vec<f64>> = halfspaces
        .iter()
        .map(|h| vec![h.normal.x, h.normal.y, h.normal.z, 1.0])
        .collect();
    let mut b: Vec<f64> = halfspaces.iter().map(|h| h.offset).collect();
    a.push(vec![0.0, 0.0, 0.0, 1.0]);
    b.push(RADIUS_CAP);
    match lp::maximize(&[0.0, 0.0, 0.0, 1.0], &a, &b) {
        LpOutcome::Optimal(s) => Some(s.value),
        LpOutcome::Unbounded => Some(RADIUS_CAP),
        LpOutcome::Infeasible => None,
    }
}

/// Bounds from the axis-aligned extremal LPs, `None` if any is unbounded.
pub(crate) fn bounds_of(halfspaces: &[Halfspace]) -> Option<Aabb> {
    let a: Vec<Vec<f64>> = halfspaces
        .iter()
        .map(|h| h.normal.iter().copied().collect())
        .collect();
    let b: Vec<f64> = halfspaces.iter().map(|h| h.offset).collect();
    let mut min = Vector3::zeros();
    let mut max = Vector3::zeros();
    for axis in 0..3 {
        let mut c = [0.0; 3];
        c[axis] = 1.0;
        max[axis] = lp::maximize(&c, &a, &b).optimal()?.value;
        c[axis] = -1.0;
        min[axis] = -lp::maximize(&c, &a, &b).optimal()?.value;
    }
    Some(Aabb { min, max })
}
