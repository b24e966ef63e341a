//! HTTP client for `/v1/render` and the renderer backends used by the
//! service.

use std::time::Duration;

use b2w_core::protocol::{decode_response, encode_request, stub_render, RenderResponse};
use b2w_core::{RenderRequest, RenderResult};
use thiserror::Error;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
pub const DEFAULT_RETRIES: u32 = 2;
const RETRY_BACKOFF: Duration = Duration::from_millis(100);

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("renderer did not answer within {timeout_ms} ms ({attempts} attempts)")]
    Timeout { timeout_ms: u64, attempts: u32 },
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { message: String, attempts: u32 },
    #[error("protocol error: {message}")]
    Protocol { code: String, message: String },
    #[error("renderer failed with HTTP {status}: {message}")]
    Renderer { status: u16, code: String, message: String },
    #[error("invalid endpoint `{0}`")]
    Endpoint(String),
}

impl RemoteError {
    pub fn code(&self) -> &str {
        match self {
            RemoteError::Timeout { .. } => "render_bridge.timeout",
            RemoteError::Transport { .. } => "render_bridge.transport",
            RemoteError::Protocol { code, .. } => code,
            RemoteError::Renderer { .. } => "render_bridge.renderer",
            RemoteError::Endpoint(_) => "render_bridge.endpoint",
        }
    }
}

/// `/v1/render` URL for an endpoint given either as a base URL or as the
/// full path.
pub fn render_url(endpoint: &str) -> Result<String, RemoteError> {
    let trimmed = endpoint.trim().trim_end_matches('/');
    if !(trimmed.starts_with("http://") || trimmed.starts_with("https://")) {
        return Err(RemoteError::Endpoint(endpoint.to_string()));
    }
    if trimmed.ends_with("/v1/render") {
        Ok(trimmed.to_string())
    } else {
        Ok(format!("{trimmed}/v1/render"))
    }
}

/// Render client. Cheap to clone; clones share the connection pool.
#[derive(Debug, Clone)]
pub struct RemoteRenderer {
    client: reqwest::Client,
    url: String,
    timeout: Duration,
    retries: u32,
}

impl RemoteRenderer {
    pub fn new(endpoint: &str, timeout: Duration, retries: u32) -> Result<Self, RemoteError> {
        let client = reqwest::Client::builder()
            .connect_timeout(timeout)
            .build()
            .map_err(|e| RemoteError::Endpoint(e.to_string()))?;
        Ok(RemoteRenderer {
            client,
            url: render_url(endpoint)?,
            timeout,
            retries,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Sends the request, retrying transport failures and timeouts up to
    /// the configured count. Every attempt sends the same bytes.
    pub async fn render(&self, req: &RenderRequest) -> Result<RenderResult, RemoteError> {
        let body = encode_request(req).map_err(|e| RemoteError::Protocol {
            code: e.code().to_string(),
            message: e.to_string(),
        })?;
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.attempt(body.clone()).await {
                Ok((status, bytes)) => return interpret(status, &bytes, req),
                Err(e) if attempt > self.retries => {
                    return Err(if e.is_timeout() {
                        RemoteError::Timeout {
                            timeout_ms: self.timeout.as_millis() as u64,
                            attempts: attempt,
                        }
                    } else {
                        RemoteError::Transport {
                            message: error_chain(&e),
                            attempts: attempt,
                        }
                    });
                }
                Err(e) => {
                    log::warn!("render attempt {attempt} failed: {}", error_chain(&e));
                    tokio::time::sleep(RETRY_BACKOFF * attempt).await;
                }
            }
        }
    }

    async fn attempt(&self, body: Vec<u8>) -> Result<(u16, Vec<u8>), reqwest::Error> {
        let resp = self
            .client
            .post(&self.url)
            .header("content-type", "application/json")
            .timeout(self.timeout)
            .body(body)
            .send()
            .await?;
        let status = resp.status().as_u16();
        let bytes = resp.bytes().await?;
        Ok((status, bytes.to_vec()))
    }
}

fn error_chain(e: &dyn std::error::Error) -> String {
    let mut s = e.to_string();
    let mut cur = e.source();
    while let Some(inner) = cur {
        s.push_str(": ");
        s.push_str(&inner.to_string());
        cur = inner.source();
    }
    s
}

fn interpret(status: u16, bytes: &[u8], req: &RenderRequest) -> Result<RenderResult, RemoteError> {
    let ok = (200..300).contains(&status);
    match decode_response(bytes) {
        Ok(RenderResponse::Ok(result)) if ok => {
            let actual = result.image.dimensions();
            let expected = (req.width(), req.height());
            if actual != expected {
                return Err(RemoteError::Protocol {
                    code: "render_bridge.dimension_mismatch".into(),
                    message: format!("image is {}x{}, request was {}x{}", actual.0, actual.1, expected.0, expected.1),
                });
            }
            Ok(result)
        }
        Ok(RenderResponse::Ok(_)) => Err(RemoteError::Renderer {
            status,
            code: "render_bridge.renderer".into(),
            message: "result envelope with an error status".into(),
        }),
        // The server rejected our message: a protocol failure, not a
        // renderer failure.
        Ok(RenderResponse::Error { code, message }) if status == 400 => Err(RemoteError::Protocol { code, message }),
        Ok(RenderResponse::Error { code, message }) => Err(RemoteError::Renderer { status, code, message }),
        Err(e) if ok => Err(RemoteError::Protocol {
            code: e.code().to_string(),
            message: format!("undecodable response: {e}"),
        }),
        Err(_) => Err(RemoteError::Renderer {
            status,
            code: "render_bridge.renderer".into(),
            message: String::from_utf8_lossy(&bytes[..bytes.len().min(200)]).into_owned(),
        }),
    }
}

/// Where the service sends render requests.
#[derive(Debug, Clone)]
pub enum Renderer {
    Stub,
    Remote(RemoteRenderer),
}

impl Renderer {
    pub fn identity(&self) -> String {
        match self {
            Renderer::Stub => b2w_core::protocol::STUB_RENDERER_ID.to_string(),
            Renderer::Remote(r) => r.url().to_string(),
        }
    }

    pub async fn render(&self, req: RenderRequest) -> Result<RenderResult, RemoteError> {
        match self {
            Renderer::Stub => tokio::task::spawn_blocking(move || stub_render(&req))
                .await
                .map_err(|e| RemoteError::Renderer {
                    status: 500,
                    code: "render_bridge.renderer".into(),
                    message: e.to_string(),
                }),
            Renderer::Remote(r) => r.render(&req).await,
        }
    }
}
