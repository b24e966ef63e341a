use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;

use b2w_core::edit::{apply_edit, move_badge, EditOp, TextureBadge};
use b2w_core::protocol::{
    decode_request, decode_response, encode_request, encode_result, stub_render, ProtocolError, RenderResponse,
};
use b2w_core::synthetic::{box_scene, square_camera};
use b2w_core::{render_depth, DepthMap, Mask, RenderRequest, Scene};
use base64::Engine;
use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};

use crate::common::BIN;
use crate::{ensure, Check};

/// Request through encode, decode, the stub and back.
fn over_the_wire(req: &RenderRequest) -> Result<RgbImage, String> {
    let decoded = decode_request(&encode_request(req).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let bytes = encode_result(&stub_render(&decoded)).map_err(|e| e.to_string())?;
    match decode_response(&bytes).map_err(|e| e.to_string())? {
        RenderResponse::Ok(r) => Ok(r.image),
        RenderResponse::Error { code, .. } => Err(code),
    }
}

/// Moving a primitive and re-rendering with the move badge leaves every
/// pixel outside the badge mask bit-identical.
pub fn edit_locality() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1007);
    let (mut trials, mut outside, mut changed_inside) = (0, 0usize, 0usize);
    for trial in 0..50u64 {
        let before = box_scene(square_camera(64, 48), rng.random_range(2..5), 2000 + trial);
        let id = format!("b{}", rng.random_range(0..before.primitives().len()));
        let delta = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let after = apply_edit(&before, &EditOp::TranslatePrimitive { id: id.clone(), delta }).map_err(|e| e.to_string())?;
        let request = |s: &Scene, badge: Option<TextureBadge>| RenderRequest {
            prompt: "a dining room".into(),
            seed: trial,
            depth: render_depth(s).0,
            badge,
            hints: None,
        };
        let first = over_the_wire(&request(&before, None))?;
        let ids: BTreeSet<String> = [id].into();
        let badge = move_badge(Some(&before), Some(&after), &ids, &first, rng.random_range(0..6)).map_err(|e| e.to_string())?;
        let second = over_the_wire(&request(&after, Some(badge.clone())))?;
        for (i, (a, b)) in first.pixels().zip(second.pixels()).enumerate() {
            if badge.mask().bits()[i] {
                changed_inside += (a != b) as usize;
            } else {
                ensure!(a == b, "trial {trial}: pixel {i} outside the mask changed");
                outside += 1;
            }
        }
        trials += 1;
    }
    ensure!(changed_inside > 0, "no pixel inside any mask changed; the check is vacuous");
    Ok(format!("{trials} moves, {outside} unmasked pixels identical, {changed_inside} masked pixels re-rendered"))
}

fn run_b2w(dir: &Path, threads: usize, args: &[&str]) -> Result<(), String> {
    let out = Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .env("RAYON_NUM_THREADS", threads.to_string())
        .env_remove("B2W_RENDERER_URL")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("b2w {}: {}", args[0], String::from_utf8_lossy(&out.stderr).trim()))
    }
}

const OUTPUTS: [&str; 8] = [
    "scene.json",
    "report.json",
    "depth.b2wd",
    "depth.png",
    "ids.png",
    "image.png",
    "eval.json",
    "eval.txt",
];

fn pipeline_outputs(dir: &Path, threads: usize) -> Result<Vec<Vec<u8>>, String> {
    for f in OUTPUTS {
        let _ = std::fs::remove_file(dir.join(f));
    }
    run_b2w(dir, threads, &["decompose", "--depth", "input.b2wd", "--fit", "fit.toml", "--out", "scene.json", "--report", "report.json", "--prompt", "a bathroom", "--seed", "5"])?;
    run_b2w(dir, threads, &["render-depth", "--scene", "scene.json", "--out-depth", "depth.b2wd", "--out-png", "depth.png", "--out-ids", "ids.png"])?;
    run_b2w(dir, threads, &["render", "--stub", "--scene", "scene.json", "--out", "image.png"])?;
    run_b2w(dir, threads, &["eval", "--manifest", "manifest.csv", "--out", "eval.json", "--table", "eval.txt"])?;
    OUTPUTS
        .iter()
        .map(|f| std::fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}")))
        .collect()
}

/// decompose, render-depth, render --stub and eval produce byte-identical
/// files across runs and worker-thread counts.
pub fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let scene = box_scene(square_camera(48, 40), 3, 21);
    render_depth(&scene).0.write(d.join("input.b2wd")).map_err(|e| e.to_string())?;
    std::fs::write(d.join("fit.toml"), "budget = 4\nnear_surface_samples = 5000\nvolume_samples = 5000\niterations = 60\n")
        .map_err(|e| e.to_string())?;
    std::fs::write(
        d.join("manifest.csv"),
        "input.b2wd,depth.b2wd,bathroom,bathroom\ndepth.b2wd,input.b2wd,kitchen,bathroom\ndepth.b2wd,depth.b2wd,kitchen,kitchen\n",
    )
    .map_err(|e| e.to_string())?;
    let reference = pipeline_outputs(d, 1)?;
    let mut runs = 1;
    for threads in [3, 3, 1] {
        let again = pipeline_outputs(d, threads)?;
        runs += 1;
        for (i, (a, b)) in reference.iter().zip(&again).enumerate() {
            ensure!(a == b, "{} differs between 1 and {threads} threads", OUTPUTS[i]);
        }
    }
    Ok(format!("{} output files identical over {runs} runs with 1 and 3 threads", OUTPUTS.len()))
}

fn random_hint(rng: &mut ChaCha8Rng, depth: u32) -> Value {
    match rng.random_range(0..if depth == 0 { 5 } else { 7 }) {
        0 => Value::Null,
        1 => Value::from(rng.random_bool(0.5)),
        2 => Value::from(rng.random::<i64>()),
        3 => Value::from(rng.random_range(-1e6..1e6)),
        4 => Value::from((0..rng.random_range(0..8)).map(|_| rng.random_range(' '..='~')).collect::<String>()),
        5 => Value::from((0..rng.random_range(0..3)).map(|_| random_hint(rng, depth - 1)).collect::<Vec<_>>()),
        _ => Value::Object(
            (0..rng.random_range(0..3))
                .map(|i| (format!("k{i}"), random_hint(rng, depth - 1)))
                .collect(),
        ),
    }
}

fn random_request(rng: &mut ChaCha8Rng) -> RenderRequest {
    let (w, h) = (rng.random_range(1..24u32), rng.random_range(1..24u32));
    let n = (w * h) as usize;
    let depth: Vec<f32> = (0..n)
        .map(|_| match rng.random_range(0..10) {
            0 => f32::INFINITY,
            1 => rng.random_range(f32::MIN_POSITIVE..1e-4),
            _ => rng.random_range(1e-4..100.0),
        })
        .collect();
    let badge = rng.random_bool(0.5).then(|| {
        let px: Vec<u8> = (0..3 * n).map(|_| rng.random()).collect();
        let bits: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        TextureBadge::new(RgbImage::from_raw(w, h, px).unwrap(), Mask::new(w, h, bits).unwrap()).unwrap()
    });
    let hints = rng.random_bool(0.5).then(|| {
        (0..rng.random_range(0..5))
            .map(|i| (format!("hint_{i}"), random_hint(rng, 2)))
            .collect::<Map<String, Value>>()
    });
    let prompt: String = (0..rng.random_range(0..40))
        .map(|_| match rng.random_range(0..4) {
            0 => rng.random_range('\u{a0}'..'\u{2000}'),
            1 => rng.random_range('\u{1f300}'..'\u{1f600}'),
            _ => rng.random_range(' '..='~'),
        })
        .collect();
    RenderRequest {
        prompt,
        seed: rng.random(),
        depth: DepthMap::from_f32(w, h, &depth).unwrap(),
        badge,
        hints,
    }
}

fn envelope(req: &RenderRequest) -> Value {
    serde_json::from_slice(&encode_request(req).unwrap()).unwrap()
}

fn decode_value(v: &Value) -> Result<RenderRequest, ProtocolError> {
    decode_request(&serde_json::to_vec(v).unwrap())
}

/// 1000 random requests round-trip losslessly; malformed envelopes are
/// rejected with the matching typed error.
pub fn protocol_fuzz() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1009);
    let mut with_inf = 0;
    for case in 0..1000 {
        let req = random_request(&mut rng);
        with_inf += req.depth.values().iter().any(|v| v.is_infinite()) as usize;
        let bytes = encode_request(&req).map_err(|e| format!("case {case}: {e}"))?;
        let back = decode_request(&bytes).map_err(|e| format!("case {case}: {e}"))?;
        ensure!(back == req, "case {case}: round trip changed the request");
        ensure!(encode_request(&back).unwrap() == bytes, "case {case}: re-encoding differs");
    }

    const REQUIRED: [&str; 6] = ["version", "prompt", "seed", "width", "height", "depth_b64"];
    let mut rejected = 0;
    for case in 0..200 {
        let mut req = random_request(&mut rng);
        if req.badge.is_none() {
            let (w, h) = (req.width(), req.height());
            req.badge = Some(TextureBadge::new(RgbImage::new(w, h), Mask::empty(w, h)).unwrap());
        }
        let bytes = encode_request(&req).unwrap();
        let v = envelope(&req);
        let field = REQUIRED[case % REQUIRED.len()];
        let b64 = base64::engine::general_purpose::STANDARD;

        let cut = rng.random_range(0..bytes.len());
        let mut outcomes: Vec<(&str, Result<RenderRequest, ProtocolError>, fn(&ProtocolError, &str) -> bool)> = vec![
            ("truncated", decode_request(&bytes[..cut]), |e, _| matches!(e, ProtocolError::Json(_))),
        ];
        let mut missing = v.clone();
        missing.as_object_mut().unwrap().remove(field);
        outcomes.push(("missing", decode_value(&missing), |e, f| matches!(e, ProtocolError::MissingField(x) if *x == f)));
        let mut mistyped = v.clone();
        mistyped[field] = Value::from(vec![1]);
        outcomes.push(("mistyped", decode_value(&mistyped), |e, f| matches!(e, ProtocolError::FieldType { field: x, .. } if *x == f)));
        let mut version = v.clone();
        version["version"] = Value::from("b2w/2");
        outcomes.push(("version", decode_value(&version), |e, _| matches!(e, ProtocolError::Version { .. })));
        let mut unknown = v.clone();
        unknown["steps_override"] = Value::from(3);
        outcomes.push(("unknown", decode_value(&unknown), |e, _| matches!(e, ProtocolError::UnknownField(x) if x == "steps_override")));
        let mut wide = v.clone();
        wide["width"] = Value::from(req.width() + 1);
        outcomes.push(("width", decode_value(&wide), |e, _| matches!(e, ProtocolError::DimensionMismatch { field: "depth_b64", .. })));
        // Tampered length: the raster header claims one more row.
        let mut raw = b64.decode(v["depth_b64"].as_str().unwrap()).unwrap();
        let rows = u32::from_le_bytes(raw[8..12].try_into().unwrap()) + 1;
        raw[8..12].copy_from_slice(&rows.to_le_bytes());
        let mut long = v.clone();
        long["depth_b64"] = Value::from(b64.encode(&raw));
        outcomes.push(("length", decode_value(&long), |e, _| matches!(e, ProtocolError::Raster { field: "depth_b64", .. })));
        let mut garbled = v.clone();
        garbled["depth_b64"] = Value::from("not*base64");
        outcomes.push(("base64", decode_value(&garbled), |e, _| matches!(e, ProtocolError::Base64("depth_b64"))));
        let mut half = v.clone();
        half.as_object_mut().unwrap().remove("badge_mask_b64");
        outcomes.push(("badge", decode_value(&half), |e, _| matches!(e, ProtocolError::IncompleteBadge("badge_mask_b64"))));

        for (kind, outcome, expected) in outcomes {
            match outcome {
                Ok(_) => return Err(format!("case {case}: {kind} envelope accepted")),
                Err(e) => ensure!(expected(&e, field), "case {case}: {kind} envelope gave `{e}` ({})", e.code()),
            }
            rejected += 1;
        }
    }
    Ok(format!("1000 round trips ({with_inf} with infinite depth), {rejected} malformed envelopes rejected with typed errors"))
}
