//! Module-qualified error codes and the JSON diagnostic printed on failure.

use std::fmt;

use b2w_core::decompose::DecomposeError;
use b2w_core::edit::EditError;
use b2w_core::metrics::MetricsError;
use b2w_core::protocol::ProtocolError;
use b2w_core::raster::RasterError;
use b2w_core::raytrace::RaytraceError;
use b2w_core::{CameraError, PrimitiveError, SceneError};

use crate::remote::RemoteError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: String,
    pub message: String,
}

impl CliError {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        CliError {
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::new("cli.io", format!("{}: {e}", path.display()))
    }

    /// `{"error": {"code": ..., "message": ...}}` on one line.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": { "code": self.code, "message": self.message } }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

macro_rules! coded {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::new(e.code(), e.to_string())
            }
        }
    )*};
}

coded!(
    DecomposeError,
    EditError,
    MetricsError,
    ProtocolError,
    RasterError,
    RaytraceError,
    CameraError,
    PrimitiveError,
    SceneError,
    RemoteError
);
