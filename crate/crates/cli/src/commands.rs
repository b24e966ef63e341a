//! Command-line interface. Each subcommand reads named files, writes named
//! files and is reproducible from its flags.

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use b2w_core::camera::Camera;
use b2w_core::decompose::{decompose, DecomposeError, FitConfig};
use b2w_core::edit::{
    apply_edits, decode_rgb_png, encode_rgb_png, move_badge, orbit_camera, parse_script, random_badge,
    DEFAULT_BADGE_DILATION,
};
use b2w_core::metrics::{evaluate_batch, parse_manifest};
use b2w_core::protocol::stub_render;
use b2w_core::raster::{DepthMap, Mask};
use b2w_core::{render_depth, RenderRequest, Scene, TextureBadge, Vector3, DEFAULT_BUDGET};
use clap::{Args, Parser, Subcommand};

use crate::config::{load_camera, load_fit};
use crate::error::CliError;
use crate::remote::{RemoteRenderer, Renderer, DEFAULT_RETRIES};

#[derive(Debug, Parser)]
#[command(name = "b2w", version, about = "Fit, edit, render and evaluate convex primitive scenes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit convex primitives to a depth map and write a scene document.
    Decompose(DecomposeArgs),
    /// Ray trace a scene to a depth raster and optional id buffer.
    RenderDepth(RenderDepthArgs),
    /// Apply an edit script to a scene.
    Edit(EditArgs),
    /// Build a texture badge (image with primitive footprints blacked out).
    Badge(BadgeArgs),
    /// Render a scene to an image through a renderer.
    Render(RenderArgs),
    /// Evaluate depth errors and label accuracy over a manifest.
    Eval(EvalArgs),
    /// Move the camera around a pivot point.
    Orbit(OrbitArgs),
    /// Serve the scene HTTP API.
    Serve(ServeArgs),
    /// Serve /v1/render with the deterministic stub renderer.
    StubServer(StubServerArgs),
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Depth map: `.png` is 16-bit millimeters, anything else B2WD.
    #[arg(long)]
    pub depth: PathBuf,
    /// Camera TOML. Defaults to the standard intrinsics at the depth size.
    #[arg(long)]
    pub camera: Option<PathBuf>,
    /// Fit TOML; omitted keys keep their defaults.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// Output scene document.
    #[arg(long)]
    pub out: PathBuf,
    /// Fit report (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Prompt stored in the scene.
    #[arg(long, default_value = "")]
    pub prompt: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RenderDepthArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Output B2WD depth raster.
    #[arg(long)]
    pub out_depth: PathBuf,
    /// Also write the depth as a 16-bit PNG in millimeters.
    #[arg(long)]
    pub out_png: Option<PathBuf>,
    /// 16-bit PNG id buffer: 0 for background, slot index + 1 otherwise.
    #[arg(long)]
    pub out_ids: Option<PathBuf>,
    /// Resolution factor applied to the camera.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
}

#[derive(Debug, Args)]
pub struct EditArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Edit script, one op per line.
    #[arg(long)]
    pub script: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Maximum number of primitives.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: usize,
}

#[derive(Debug, Args)]
pub struct BadgeArgs {
    /// Scene before the move. For deletions give only this.
    #[arg(long)]
    pub before: Option<PathBuf>,
    /// Scene after the move. For additions give only this.
    #[arg(long)]
    pub after: Option<PathBuf>,
    /// Comma-separated ids of the moved primitives.
    #[arg(long, value_delimiter = ',')]
    pub ids: Vec<String>,
    /// Mask a random subset of primitives instead, each with this
    /// probability. Uses the first scene given.
    #[arg(long, conflicts_with = "ids")]
    pub random: Option<f64>,
    /// Source image (PNG) the badge is cut from.
    #[arg(long)]
    pub image: PathBuf,
    /// Badge image with masked pixels blacked out (PNG).
    #[arg(long)]
    pub out: PathBuf,
    /// Mask PNG (255 inside).
    #[arg(long)]
    pub out_mask: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BADGE_DILATION)]
    pub dilation: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RendererArgs {
    /// Use the built-in stub renderer.
    #[arg(long, conflicts_with = "endpoint")]
    pub stub: bool,
    /// Renderer base URL.
    #[arg(long, env = "B2W_RENDERER_URL")]
    pub endpoint: Option<String>,
    /// Per-attempt timeout.
    #[arg(long, default_value_t = 60_000)]
    pub timeout_ms: u64,
    /// Extra attempts after a transport failure.
    #[arg(long, default_value_t = DEFAULT_RETRIES)]
    pub retries: u32,
}

impl RendererArgs {
    pub fn renderer(&self) -> Result<Renderer, CliError> {
        if self.stub {
            return Ok(Renderer::Stub);
        }
        match &self.endpoint {
            Some(url) => Ok(Renderer::Remote(RemoteRenderer::new(
                url,
                Duration::from_millis(self.timeout_ms),
                self.retries,
            )?)),
            None => Err(CliError::new(
                "cli.renderer",
                "no renderer: pass --stub, --endpoint or set B2W_RENDERER_URL",
            )),
        }
    }
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Output image (PNG).
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub renderer: RendererArgs,
    /// Override the scene prompt.
    #[arg(long)]
    pub prompt: Option<String>,
    /// Override the scene seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Badge source image (PNG); requires --badge-mask.
    #[arg(long, requires = "badge_mask")]
    pub badge_image: Option<PathBuf>,
    /// Badge mask (PNG, nonzero inside).
    #[arg(long, requires = "badge_image")]
    pub badge_mask: Option<PathBuf>,
    /// Renderer hints as a JSON object, passed through verbatim.
    #[arg(long)]
    pub hints: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// CSV without header: primitive depth, inferred depth, requested label,
    /// predicted label. Relative paths resolve against the manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Report (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a plain-text table.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Skip scale-shift alignment.
    #[arg(long)]
    pub no_align: bool,
}

#[derive(Debug, Args)]
pub struct OrbitArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Pivot point `x,y,z` in world coordinates.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub pivot: Vec<f64>,
    /// Rotation about the camera's y axis (degrees).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub yaw: f64,
    /// Rotation about the camera's x axis (degrees).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub pitch: f64,
    /// Distance moved toward the pivot (meters).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub dolly: f64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    /// Port to listen on; 0 picks a free port.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Directory holding persisted scenes.
    #[arg(long)]
    pub scene_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: usize,
    #[command(flatten)]
    pub renderer: RendererArgs,
}

#[derive(Debug, Args)]
pub struct StubServerArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    #[arg(long, default_value_t = 8090)]
    pub port: u16,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Decompose(a) => run_decompose(&a),
        Command::RenderDepth(a) => run_render_depth(&a),
        Command::Edit(a) => run_edit(&a),
        Command::Badge(a) => run_badge(&a),
        Command::Render(a) => run_render(&a),
        Command::Eval(a) => run_eval(&a),
        Command::Orbit(a) => run_orbit(&a),
        Command::Serve(a) => run_serve(&a),
        Command::StubServer(a) => run_stub_server(&a),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_depth_file(path: &Path) -> Result<DepthMap, CliError> {
    let bytes = read_bytes(path)?;
    let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    Ok(if is_png {
        DepthMap::from_png16(&bytes)?
    } else {
        DepthMap::from_b2wd(&bytes)?
    })
}

pub fn read_scene(path: &Path, budget: usize) -> Result<Scene, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Scene::from_document_with_budget(&text, budget)
        .map_err(|e| CliError::new(e.code(), format!("{}: {e}", path.display())))
}

fn read_image(path: &Path) -> Result<image::RgbImage, CliError> {
    Ok(decode_rgb_png(&read_bytes(path)?)?)
}

fn run_decompose(a: &DecomposeArgs) -> Result<(), CliError> {
    let depth = read_depth_file(&a.depth)?;
    let camera = match &a.camera {
        Some(p) => load_camera(p)?,
        None => Camera::with_default_intrinsics(depth.width(), depth.height())?,
    };
    let cfg = match &a.fit {
        Some(p) => load_fit(p)?,
        None => FitConfig::default(),
    };
    let (scene, report) = match decompose(&depth, &camera, &cfg, a.seed) {
        Ok(v) => v,
        Err(e @ DecomposeError::Diverged { .. }) => {
            if let (DecomposeError::Diverged { report, .. }, Some(path)) = (&e, &a.report) {
                write_bytes(path, report.to_document().as_bytes())?;
            }
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    let scene = Scene::with_budget(
        scene.primitives().to_vec(),
        *scene.camera(),
        a.prompt.clone(),
        scene.seed(),
        scene.budget(),
    )?;
    write_bytes(&a.out, scene.to_document().as_bytes())?;
    if let Some(path) = &a.report {
        write_bytes(path, report.to_document().as_bytes())?;
    }
    log::info!(
        "{} primitives, loss {:.4} -> {:.4}",
        scene.primitives().len(),
        report.entry_loss,
        report.final_loss
    );
    Ok(())
}

fn run_render_depth(a: &RenderDepthArgs) -> Result<(), CliError> {
    let mut scene = read_scene(&a.scene, usize::MAX)?;
    if a.scale != 1.0 {
        let camera = scene.camera().scaled(a.scale)?;
        scene = Scene::with_budget(
            scene.primitives().to_vec(),
            camera,
            scene.prompt(),
            scene.seed(),
            scene.budget(),
        )?;
    }
    let (depth, ids) = render_depth(&scene);
    write_bytes(&a.out_depth, &depth.to_b2wd())?;
    if let Some(path) = &a.out_png {
        write_bytes(path, &depth.to_png16()?)?;
    }
    if let Some(path) = &a.out_ids {
        write_bytes(path, &ids.to_png16()?)?;
    }
    Ok(())
}

fn run_edit(a: &EditArgs) -> Result<(), CliError> {
    let scene = read_scene(&a.scene, a.budget)?;
    let text = std::fs::read_to_string(&a.script).map_err(|e| CliError::io(&a.script, e))?;
    let ops = parse_script(&text)?;
    let edited = apply_edits(&scene, &ops).map_err(|(i, e)| {
        CliError::new(e.code(), format!("op {} ({}): {e}", i + 1, a.script.display()))
    })?;
    write_bytes(&a.out, edited.to_document().as_bytes())
}

fn run_badge(a: &BadgeArgs) -> Result<(), CliError> {
    let before = a.before.as_deref().map(|p| read_scene(p, usize::MAX)).transpose()?;
    let after = a.after.as_deref().map(|p| read_scene(p, usize::MAX)).transpose()?;
    let image = read_image(&a.image)?;
    let badge = match a.random {
        Some(fraction) => {
            let scene = before
                .as_ref()
                .or(after.as_ref())
                .ok_or_else(|| CliError::new("editor.no_scene", "pass --before or --after"))?;
            random_badge(scene, &image, fraction, a.seed)?
        }
        None => {
            let ids: BTreeSet<String> = a.ids.iter().map(|s| s.trim().to_string()).collect();
            move_badge(before.as_ref(), after.as_ref(), &ids, &image, a.dilation)?
        }
    };
    write_bytes(&a.out, &badge.blacked_out_png()?)?;
    if let Some(path) = &a.out_mask {
        write_bytes(path, &badge.mask().to_png()?)?;
    }
    Ok(())
}

fn build_request(a: &RenderArgs, scene: &Scene) -> Result<RenderRequest, CliError> {
    let (depth, _) = render_depth(scene);
    let badge = match (&a.badge_image, &a.badge_mask) {
        (Some(img), Some(mask)) => Some(TextureBadge::new(read_image(img)?, Mask::from_png(&read_bytes(mask)?)?)?),
        _ => None,
    };
    let hints = match &a.hints {
        Some(text) => match serde_json::from_str(text) {
            Ok(serde_json::Value::Object(map)) => Some(map),
            _ => return Err(CliError::new("cli.hints", "--hints must be a JSON object")),
        },
        None => None,
    };
    let req = RenderRequest {
        prompt: a.prompt.clone().unwrap_or_else(|| scene.prompt().to_string()),
        seed: a.seed.unwrap_or(scene.seed()),
        depth,
        badge,
        hints,
    };
    req.validate()?;
    Ok(req)
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::new("cli.runtime", e.to_string()))
}

fn run_render(a: &RenderArgs) -> Result<(), CliError> {
    let scene = read_scene(&a.scene, usize::MAX)?;
    let req = build_request(a, &scene)?;
    let result = match a.renderer.renderer()? {
        Renderer::Stub => stub_render(&req),
        Renderer::Remote(client) => runtime()?.block_on(client.render(&req))?,
    };
    log::info!("rendered by {} in {} ms", result.renderer, result.elapsed_ms);
    write_bytes(&a.out, &encode_rgb_png(&result.image)?)
}

fn run_eval(a: &EvalArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.manifest).map_err(|e| CliError::io(&a.manifest, e))?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let items = parse_manifest(&text, base)?;
    let report = evaluate_batch(&items, !a.no_align);
    for item in report.items.iter().filter(|r| r.failure.is_some()) {
        log::warn!("manifest row {}: {}", item.index + 1, item.failure.as_deref().unwrap_or_default());
    }
    write_bytes(&a.out, report.to_document().as_bytes())?;
    if let Some(path) = &a.table {
        write_bytes(path, report.to_table().as_bytes())?;
    }
    Ok(())
}

fn run_orbit(a: &OrbitArgs) -> Result<(), CliError> {
    let scene = read_scene(&a.scene, usize::MAX)?;
    let pivot = match a.pivot.as_slice() {
        [x, y, z] => Vector3::new(*x, *y, *z),
        [] => scene.camera().pose().to_world(&Vector3::new(0.0, 0.0, 3.0)),
        _ => return Err(CliError::new("cli.pivot", "--pivot takes three numbers")),
    };
    let moved = orbit_camera(&scene, &pivot, a.yaw.to_radians(), a.pitch.to_radians(), a.dolly);
    write_bytes(&a.out, moved.to_document().as_bytes())
}

async fn bind(host: &str, port: u16) -> Result<tokio::net::TcpListener, CliError> {
    let listener = tokio::net::TcpListener::bind((host, port))
        .await
        .map_err(|e| CliError::new("cli.bind", format!("{host}:{port}: {e}")))?;
    let addr: SocketAddr = listener
        .local_addr()
        .map_err(|e| CliError::new("cli.bind", e.to_string()))?;
    // Tests and scripts read the bound address from the first line.
    println!("listening on http://{addr}");
    use std::io::Write;
    let _ = std::io::stdout().flush();
    Ok(listener)
}

fn run_serve(a: &ServeArgs) -> Result<(), CliError> {
    let renderer = a.renderer.renderer()?;
    let state = Arc::new(crate::server::AppState::open(&a.scene_dir, a.budget, renderer)?);
    runtime()?.block_on(async {
        let listener = bind(&a.bind, a.port).await?;
        axum::serve(listener, crate::server::router(state))
            .await
            .map_err(|e| CliError::new("cli.serve", e.to_string()))
    })
}

fn run_stub_server(a: &StubServerArgs) -> Result<(), CliError> {
    runtime()?.block_on(async {
        let listener = bind(&a.bind, a.port).await?;
        axum::serve(listener, crate::stub_server::router())
            .await
            .map_err(|e| CliError::new("cli.serve", e.to_string()))
    })
}
