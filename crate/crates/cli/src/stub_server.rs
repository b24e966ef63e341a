//! `/v1/render` served by the deterministic stub renderer.

use axum::body::Bytes;
use axum::extract::DefaultBodyLimit;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use b2w_core::protocol::{decode_request, encode_error, encode_result, stub_render, STUB_RENDERER_ID};

/// Largest accepted request body.
pub const BODY_LIMIT: usize = 256 * 1024 * 1024;

pub fn router() -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/render", post(render))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "renderer": STUB_RENDERER_ID }))
}

fn json_response(status: StatusCode, body: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn render(body: Bytes) -> Response {
    let req = match decode_request(&body) {
        Ok(r) => r,
        Err(e) => return json_response(StatusCode::BAD_REQUEST, encode_error(e.code(), &e.to_string())),
    };
    let rendered = tokio::task::spawn_blocking(move || stub_render(&req)).await;
    let encoded = rendered
        .map_err(|e| e.to_string())
        .and_then(|r| encode_result(&r).map_err(|e| e.to_string()));
    match encoded {
        Ok(bytes) => json_response(StatusCode::OK, bytes),
        Err(message) => json_response(
            StatusCode::INTERNAL_SERVER_ERROR,
            encode_error("render_bridge.renderer", &message),
        ),
    }
}
