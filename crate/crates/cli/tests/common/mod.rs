#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::net::SocketAddr;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::Arc;

use b2w_cli::remote::Renderer;
use b2w_cli::server::{router, AppState};
use b2w_core::synthetic::{box_scene, square_camera};
use b2w_core::Scene;

pub const BIN: &str = env!("CARGO_BIN_EXE_b2w");

pub fn demo_scene() -> Scene {
    box_scene(square_camera(48, 32), 3, 7)
}

/// Serves `app` on an ephemeral local port.
pub async fn spawn_app(app: axum::Router) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    addr
}

pub async fn spawn_service(dir: &Path, renderer: Renderer) -> SocketAddr {
    let state = Arc::new(AppState::open(dir, b2w_core::DEFAULT_BUDGET, renderer).unwrap());
    spawn_app(router(state)).await
}

pub async fn spawn_stub() -> SocketAddr {
    spawn_app(b2w_cli::stub_server::router()).await
}

/// Runs the binary and returns (status success, stdout, stderr).
pub fn b2w(args: &[&str]) -> (bool, String, String) {
    let out = Command::new(BIN).args(args).env_remove("B2W_RENDERER_URL").output().unwrap();
    (
        out.status.success(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// A `b2w serve` child process and its base URL.
pub struct ServeProcess {
    pub child: Child,
    pub url: String,
}

impl ServeProcess {
    pub fn start(scene_dir: &Path) -> ServeProcess {
        let mut child = Command::new(BIN)
            .args(["serve", "--port", "0", "--stub", "--scene-dir"])
            .arg(scene_dir)
            .env_remove("B2W_RENDERER_URL")
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let url = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .to_string();
        ServeProcess { child, url }
    }

    pub fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }
}

impl Drop for ServeProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
