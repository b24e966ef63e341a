//! Scene service consumed by the authoring UI.
//!
//! Every accepted change is written to `<scene-dir>/<name>.json` (temp file,
//! fsync, rename, directory fsync) before the response is sent, so a crash
//! never loses an acknowledged revision. Edits carry the revision they were
//! made against; a stale revision is answered with 409.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use b2w_core::edit::{apply_edits, encode_rgb_png, EditOp};
use b2w_core::{render_depth, RenderRequest, Scene};
use serde::Deserialize;
use serde_json::{json, Map, Value};
use tokio::sync::Mutex;

use crate::error::CliError;
use crate::remote::Renderer;

pub const REVISION_HEADER: &str = "x-b2w-revision";
pub const RENDERER_HEADER: &str = "x-b2w-renderer";
pub const ELAPSED_HEADER: &str = "x-b2w-elapsed-ms";
/// Resolution factor of depth previews.
pub const PREVIEW_SCALE: f64 = 0.5;
const BODY_LIMIT: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone)]
struct Entry {
    revision: u64,
    scene: Scene,
}

type Slot = Arc<Mutex<Option<Entry>>>;

pub struct AppState {
    dir: PathBuf,
    budget: usize,
    renderer: Renderer,
    slots: std::sync::Mutex<HashMap<String, Slot>>,
}

impl AppState {
    /// Loads every persisted scene in `dir`, creating the directory if
    /// needed. Leftover temp files from an interrupted write are removed.
    pub fn open(dir: &Path, budget: usize, renderer: Renderer) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut slots = HashMap::new();
        for item in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
            let path = item.map_err(|e| CliError::io(dir, e))?.path();
            let Some(file) = path.file_name().and_then(|f| f.to_str()) else {
                continue;
            };
            if file.ends_with(".json.tmp") {
                fs::remove_file(&path).map_err(|e| CliError::io(&path, e))?;
                continue;
            }
            let Some(name) = file.strip_suffix(".json") else {
                continue;
            };
            if !valid_name(name) {
                continue;
            }
            let entry = load_entry(&path, budget)?;
            slots.insert(name.to_string(), Arc::new(Mutex::new(Some(entry))));
        }
        log::info!("loaded {} scenes from {}", slots.len(), dir.display());
        Ok(AppState {
            dir: dir.to_path_buf(),
            budget,
            renderer,
            slots: std::sync::Mutex::new(slots),
        })
    }

    fn slot(&self, name: &str) -> Slot {
        let mut slots = self.slots.lock().expect("slot map poisoned");
        slots.entry(name.to_string()).or_default().clone()
    }

    fn existing_slot(&self, name: &str) -> Option<Slot> {
        self.slots.lock().expect("slot map poisoned").get(name).cloned()
    }

    fn scene_count(&self) -> usize {
        self.slots.lock().expect("slot map poisoned").len()
    }
}

fn load_entry(path: &Path, budget: usize) -> Result<Entry, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |m: String| CliError::new("cli.scene_store", format!("{}: {m}", path.display()));
    let mut value: Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let revision = value
        .get("revision")
        .and_then(Value::as_u64)
        .ok_or_else(|| bad("missing revision".into()))?;
    let scene = value
        .get_mut("scene")
        .map(Value::take)
        .ok_or_else(|| bad("missing scene".into()))?;
    let scene = Scene::from_json_value(scene, budget).map_err(|e| bad(e.to_string()))?;
    Ok(Entry { revision, scene })
}

/// Scene names are 1 to 64 characters from `[A-Za-z0-9_-]`.
pub fn valid_name(name: &str) -> bool {
    (1..=64).contains(&name.len()) && name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Durable replace of `<dir>/<name>.json`.
fn persist(dir: &Path, name: &str, entry: &Entry) -> std::io::Result<()> {
    let doc = json!({ "revision": entry.revision, "scene": entry.scene.to_json_value() });
    let mut text = b2w_core::canonical_json(&doc);
    text.push('\n');
    let tmp = dir.join(format!("{name}.json.tmp"));
    let target = dir.join(format!("{name}.json"));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &target)?;
    File::open(dir)?.sync_all()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/scene/{name}", get(get_scene).put(put_scene))
        .route("/v1/scene/{name}/edit", post(edit_scene))
        .route("/v1/scene/{name}/depth.png", get(depth_preview))
        .route("/v1/scene/{name}/render", post(render_scene))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
    extra: Map<String, Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.into(),
            message: message.into(),
            extra: Map::new(),
        }
    }

    fn with(mut self, key: &str, value: Value) -> Self {
        self.extra.insert(key.to_string(), value);
        self
    }

    fn not_found(name: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "cli.scene_not_found", format!("no scene named `{name}`"))
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "cli.internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = Map::new();
        error.insert("code".into(), Value::String(self.code));
        error.insert("message".into(), Value::String(self.message));
        error.extend(self.extra);
        (self.status, Json(json!({ "error": error }))).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn check_name(name: &str) -> Result<(), ApiError> {
    if valid_name(name) {
        Ok(())
    } else {
        Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "cli.scene_name",
            "scene names are 1-64 characters from [A-Za-z0-9_-]",
        ))
    }
}

fn revision_header(revision: u64) -> (header::HeaderName, HeaderValue) {
    (header::HeaderName::from_static(REVISION_HEADER), HeaderValue::from(revision))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "renderer": state.renderer.identity(),
        "scenes": state.scene_count(),
    }))
}

async fn get_scene(State(state): State<Arc<AppState>>, UrlPath(name): UrlPath<String>) -> ApiResult {
    check_name(&name)?;
    let slot = state.existing_slot(&name).ok_or_else(|| ApiError::not_found(&name))?;
    let guard = slot.lock().await;
    let entry = guard.as_ref().ok_or_else(|| ApiError::not_found(&name))?;
    Ok((
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/json")), revision_header(entry.revision)],
        entry.scene.to_document(),
    )
        .into_response())
}

/// Creates or replaces a scene. An `x-b2w-revision` request header makes
/// the replace conditional on the current revision.
async fn put_scene(
    State(state): State<Arc<AppState>>,
    UrlPath(name): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult {
    check_name(&name)?;
    let expected = match headers.get(REVISION_HEADER) {
        None => None,
        Some(v) => Some(v.to_str().ok().and_then(|s| s.trim().parse::<u64>().ok()).ok_or_else(|| {
            ApiError::new(StatusCode::BAD_REQUEST, "cli.revision", "revision header must be an integer")
        })?),
    };
    let text = std::str::from_utf8(&body)
        .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "scene.malformed", "document is not UTF-8"))?;
    let scene = Scene::from_document_with_budget(text, state.budget).map_err(|e| {
        let status = match e {
            b2w_core::SceneError::Malformed(_) | b2w_core::SceneError::Version { .. } => StatusCode::BAD_REQUEST,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.code(), e.to_string())
    })?;

    let slot = state.slot(&name);
    let mut guard = slot.lock().await;
    let current = guard.as_ref().map(|e| e.revision).unwrap_or(0);
    if let Some(expected) = expected {
        if expected != current {
            return Err(conflict(current, expected));
        }
    }
    let entry = Entry {
        revision: current + 1,
        scene,
    };
    let dir = state.dir.clone();
    let (n, e) = (name.clone(), entry.clone());
    blocking(move || persist(&dir, &n, &e))
        .await?
        .map_err(|e| ApiError::internal(format!("persisting scene: {e}")))?;
    let revision = entry.revision;
    *guard = Some(entry);
    let status = if current == 0 { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, [revision_header(revision)], Json(json!({ "revision": revision }))).into_response())
}

fn conflict(current: u64, sent: u64) -> ApiError {
    ApiError::new(
        StatusCode::CONFLICT,
        "cli.revision_conflict",
        format!("scene is at revision {current}, edit was made against {sent}"),
    )
    .with("revision", json!(current))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EditBody {
    revision: u64,
    ops: Vec<EditOp>,
}

fn preview_png(scene: &Scene) -> Result<Vec<u8>, CliError> {
    let camera = scene.camera().scaled(PREVIEW_SCALE)?;
    let small = Scene::with_budget(
        scene.primitives().to_vec(),
        camera,
        scene.prompt(),
        scene.seed(),
        scene.budget(),
    )?;
    let (depth, _) = render_depth(&small);
    Ok(depth.to_png16()?)
}

/// Applies a batch of edits atomically: either every op applies and the
/// revision increments by one, or nothing changes.
async fn edit_scene(State(state): State<Arc<AppState>>, UrlPath(name): UrlPath<String>, body: Bytes) -> ApiResult {
    check_name(&name)?;
    let edit: EditBody = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "editor.malformed", e.to_string()))?;
    let slot = state.existing_slot(&name).ok_or_else(|| ApiError::not_found(&name))?;
    let mut guard = slot.lock().await;
    let current = guard.as_ref().ok_or_else(|| ApiError::not_found(&name))?;
    if current.revision != edit.revision {
        return Err(conflict(current.revision, edit.revision));
    }
    let before = current.scene.clone();
    let ops = edit.ops;
    let scene = blocking(move || apply_edits(&before, &ops))
        .await?
        .map_err(|(index, e)| {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), e.to_string()).with("op_index", json!(index))
        })?;
    let entry = Entry {
        revision: current.revision + 1,
        scene,
    };
    let dir = state.dir.clone();
    let (n, e) = (name.clone(), entry.clone());
    blocking(move || persist(&dir, &n, &e))
        .await?
        .map_err(|e| ApiError::internal(format!("persisting scene: {e}")))?;
    let revision = entry.revision;
    let doc = entry.scene.to_json_value();
    let scene = entry.scene.clone();
    *guard = Some(entry);
    drop(guard);

    let preview = blocking(move || preview_png(&scene))
        .await?
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok((
        [revision_header(revision)],
        Json(json!({
            "revision": revision,
            "scene": doc,
            "depth_png_b64": base64::engine::general_purpose::STANDARD.encode(preview),
        })),
    )
        .into_response())
}

async fn depth_preview(State(state): State<Arc<AppState>>, UrlPath(name): UrlPath<String>) -> ApiResult {
    check_name(&name)?;
    let slot = state.existing_slot(&name).ok_or_else(|| ApiError::not_found(&name))?;
    let (revision, scene) = {
        let guard = slot.lock().await;
        let entry = guard.as_ref().ok_or_else(|| ApiError::not_found(&name))?;
        (entry.revision, entry.scene.clone())
    };
    let png = blocking(move || preview_png(&scene))
        .await?
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok((
        [(header::CONTENT_TYPE, HeaderValue::from_static("image/png")), revision_header(revision)],
        png,
    )
        .into_response())
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RenderBody {
    prompt: Option<String>,
    seed: Option<u64>,
    hints: Option<Map<String, Value>>,
}

/// Renders the full-resolution depth of the scene and forwards it to the
/// renderer. The body may override the scene's prompt and seed.
async fn render_scene(State(state): State<Arc<AppState>>, UrlPath(name): UrlPath<String>, body: Bytes) -> ApiResult {
    check_name(&name)?;
    let options: RenderBody = if body.iter().all(u8::is_ascii_whitespace) {
        RenderBody::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "cli.render_options", e.to_string()))?
    };
    let slot = state.existing_slot(&name).ok_or_else(|| ApiError::not_found(&name))?;
    let (revision, scene) = {
        let guard = slot.lock().await;
        let entry = guard.as_ref().ok_or_else(|| ApiError::not_found(&name))?;
        (entry.revision, entry.scene.clone())
    };
    let req = blocking(move || {
        let (depth, _) = render_depth(&scene);
        RenderRequest {
            prompt: options.prompt.unwrap_or_else(|| scene.prompt().to_string()),
            seed: options.seed.unwrap_or(scene.seed()),
            depth,
            badge: None,
            hints: options.hints,
        }
    })
    .await?;
    let result = state
        .renderer
        .render(req)
        .await
        .map_err(|e| ApiError::new(StatusCode::BAD_GATEWAY, e.code(), e.to_string()))?;
    let png = encode_rgb_png(&result.image).map_err(|e| ApiError::internal(e.to_string()))?;
    let renderer = HeaderValue::from_str(&result.renderer).unwrap_or_else(|_| HeaderValue::from_static("unknown"));
    Ok((
        [
            (header::CONTENT_TYPE, HeaderValue::from_static("image/png")),
            (header::HeaderName::from_static(RENDERER_HEADER), renderer),
            (header::HeaderName::from_static(ELAPSED_HEADER), HeaderValue::from(result.elapsed_ms)),
            revision_header(revision),
        ],
        png,
    )
        .into_response())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names() {
        assert!(valid_name("kitchen_2-a"));
        assert!(!valid_name(""));
        assert!(!valid_name("../x"));
        assert!(!valid_name("a.b"));
        assert!(!valid_name(&"a".repeat(65)));
    }
}
