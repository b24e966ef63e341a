//! Scenes and their canonical text document.
//!
//! A document is a UTF-8 JSON object with the fields `version`, `camera`,
//! `primitives`, `prompt` and `seed`. Keys are written in sorted order and
//! floats in their shortest round-trippable decimal form, so serializing a
//! parsed document reproduces it byte for byte.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{Camera, CameraError};
use crate::primitive::{ConvexPrimitive, PrimitiveError};

pub const FORMAT_VERSION: &str = "b2w/1";
pub const DEFAULT_BUDGET: usize = 24;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("duplicate primitive id {0:?}")]
    DuplicateId(String),
    #[error("{count} primitives exceed the budget of {budget}")]
    BudgetExceeded { count: usize, budget: usize },
    #[error("unsupported document version {found:?}, expected {FORMAT_VERSION:?}")]
    Version { found: String },
    #[error("malformed scene document: {0}")]
    Malformed(String),
    #[error(transparent)]
    Primitive(#[from] PrimitiveError),
    #[error(transparent)]
    Camera(#[from] CameraError),
}

impl SceneError {
    pub fn code(&self) -> &'static str {
        match self {
            SceneError::DuplicateId(_) => "scene.duplicate_id",
            SceneError::BudgetExceeded { .. } => "scene.budget_exceeded",
            SceneError::Version { .. } => "scene.version",
            SceneError::Malformed(_) => "scene.malformed",
            SceneError::Primitive(e) => e.code(),
            SceneError::Camera(e) => e.code(),
        }
    }
}

/// Ordered primitives, camera and generation parameters. Immutable: edits
/// produce new scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    primitives: Vec<ConvexPrimitive>,
    camera: Camera,
    prompt: String,
    seed: u64,
    budget: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDocument {
    version: String,
    camera: Camera,
    primitives: Vec<ConvexPrimitive>,
    prompt: String,
    seed: u64,
}

impl Scene {
    pub fn new(
        primitives: Vec<ConvexPrimitive>,
        camera: Camera,
        prompt: impl Into<String>,
        seed: u64,
    ) -> Result<Self, SceneError> {
        Self::with_budget(primitives, camera, prompt, seed, DEFAULT_BUDGET)
    }

    pub fn with_budget(
        primitives: Vec<ConvexPrimitive>,
        camera: Camera,
        prompt: impl Into<String>,
        seed: u64,
        budget: usize,
    ) -> Result<Self, SceneError> {
        let mut seen = BTreeSet::new();
        for p in &primitives {
            if !seen.insert(p.id()) {
                return Err(SceneError::DuplicateId(p.id().to_string()));
            }
        }
        if primitives.len() > budget {
            return Err(SceneError::BudgetExceeded {
                count: primitives.len(),
                budget,
            });
        }
        Ok(Scene {
            primitives,
            camera,
            prompt: prompt.into(),
            seed,
            budget,
        })
    }

    pub fn primitives(&self) -> &[ConvexPrimitive] {
        &self.primitives
    }

    pub fn camera(&self) -> &Camera {
        &self.camera
    }

    pub fn prompt(&self) -> &str {
        &self.prompt
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Maximum primitive count. Not part of the document; parsing applies
    /// [`DEFAULT_BUDGET`] unless told otherwise.
    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn primitive(&self, id: &str) -> Option<&ConvexPrimitive> {
        self.primitives.iter().find(|p| p.id() == id)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.primitives.iter().position(|p| p.id() == id)
    }

    // Crate-internal mutators used by the editor on fresh clones.
    pub(crate) fn primitives_mut(&mut self) -> &mut Vec<ConvexPrimitive> {
        &mut self.primitives
    }
    pub(crate) fn set_camera(&mut self, camera: Camera) {
        self.camera = camera;
    }
    pub(crate) fn set_prompt(&mut self, prompt: String) {
        self.prompt = prompt;
    }
    pub(crate) fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    pub fn to_document(&self) -> String {
        let doc = SceneDocument {
            version: FORMAT_VERSION.to_string(),
            camera: self.camera,
            primitives: self.primitives.clone(),
            prompt: self.prompt.clone(),
            seed: self.seed,
        };
        let value = serde_json::to_value(&doc).expect("scene serializes");
        let mut out = crate::canonical_json(&value);
        out.push('\n');
        out
    }

    /// Same JSON value as [`Scene::to_document`], for embedding in envelopes.
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::from_str(&self.to_document()).expect("canonical document parses")
    }

    pub fn from_document(text: &str) -> Result<Self, SceneError> {
        Self::from_document_with_budget(text, DEFAULT_BUDGET)
    }

    pub fn from_json_value(value: serde_json::Value, budget: usize) -> Result<Self, SceneError> {
        Self::from_document_with_budget(&value.to_string(), budget)
    }

    pub fn from_document_with_budget(text: &str, budget: usize) -> Result<Self, SceneError> {
        // Check the version tag first so a newer document reports a version
        // error rather than an unknown-field error.
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| SceneError::Malformed(e.to_string()))?;
        match value.get("version") {
            Some(serde_json::Value::String(v)) if v == FORMAT_VERSION => {}
            Some(serde_json::Value::String(v)) => {
                return Err(SceneError::Version { found: v.clone() })
            }
            Some(_) => return Err(SceneError::Malformed("version must be a string".into())),
            None => return Err(SceneError::Malformed("missing field `version`".into())),
        }
        let doc: SceneDocument = serde_json::from_value(value).map_err(map_serde_error)?;
        Scene::with_budget(doc.primitives, doc.camera, doc.prompt, doc.seed, budget)
    }
}

fn map_serde_error(e: serde_json::Error) -> SceneError {
    SceneError::Malformed(e.to_string())
}
