use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use b2w_core::edit::{apply_edit, EditOp};
use b2w_core::Scene;
use serde_json::{json, Value};

use crate::common::{demo_scene, ServeProcess};
use crate::{ensure, Check};

/// The i-th edit of the burst. Dyadic deltas keep replays exact.
fn op(i: u64) -> EditOp {
    match i % 3 {
        0 => EditOp::TranslatePrimitive { id: "b0".into(), delta: [0.125, -0.0625, 0.25] },
        1 => EditOp::SetSeed { seed: i },
        _ => EditOp::TranslatePrimitive { id: "b1".into(), delta: [-0.03125, 0.0, -0.125] },
    }
}

async fn put(client: &reqwest::Client, url: &str, doc: &str) -> Result<u64, String> {
    let resp = client.put(format!("{url}/v1/scene/room")).body(doc.to_string()).send().await.map_err(|e| e.to_string())?;
    let v: Value = resp.json().await.map_err(|e| e.to_string())?;
    v["revision"].as_u64().ok_or_else(|| format!("bad PUT response {v}"))
}

async fn edit(client: &reqwest::Client, url: &str, revision: u64, ops: &[EditOp]) -> Result<(u16, Value), reqwest::Error> {
    let resp = client
        .post(format!("{url}/v1/scene/room/edit"))
        .json(&json!({ "revision": revision, "ops": ops }))
        .send()
        .await?;
    let status = resp.status().as_u16();
    Ok((status, resp.json().await?))
}

async fn get(client: &reqwest::Client, url: &str) -> Result<(u64, String), String> {
    let resp = client.get(format!("{url}/v1/scene/room")).send().await.map_err(|e| e.to_string())?;
    let rev = resp
        .headers()
        .get("x-b2w-revision")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse().ok())
        .ok_or("missing revision header")?;
    Ok((rev, resp.text().await.map_err(|e| e.to_string())?))
}

/// Applies edits one at a time until one fails, recording each
/// acknowledged revision.
async fn burst(client: reqwest::Client, url: String, mut revision: u64, acked: Arc<AtomicU64>) {
    loop {
        let i = revision - 1;
        match edit(&client, &url, revision, &[op(i)]).await {
            Ok((200, body)) => {
                revision = body["revision"].as_u64().unwrap();
                acked.store(revision, Ordering::SeqCst);
            }
            _ => return,
        }
    }
}

/// Scene after the first `edits` ops of the burst.
fn replay(initial: &Scene, edits: u64) -> Scene {
    (0..edits).fold(initial.clone(), |s, i| apply_edit(&s, &op(i)).unwrap())
}

async fn kill_and_restart(initial: &Scene) -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let client = reqwest::Client::builder().timeout(Duration::from_secs(10)).build().unwrap();
    let mut server = ServeProcess::start(dir.path());
    ensure!(put(&client, &server.url, &initial.to_document()).await? == 1, "first PUT is not revision 1");
    let mut kills = 0;
    let mut last_seen = 1;
    for round in 0..4u64 {
        let acked = Arc::new(AtomicU64::new(last_seen));
        let task = tokio::spawn(burst(client.clone(), server.url.clone(), last_seen, acked.clone()));
        tokio::time::sleep(Duration::from_millis(150 + 70 * round)).await;
        server.kill();
        kills += 1;
        task.await.map_err(|e| e.to_string())?;
        let last_ack = acked.load(Ordering::SeqCst);

        server = ServeProcess::start(dir.path());
        let (revision, doc) = get(&client, &server.url).await?;
        ensure!(revision >= last_ack, "round {round}: revision {revision} after restart, {last_ack} was acknowledged");
        // At most the single in-flight edit may have landed unacknowledged.
        ensure!(revision <= last_ack + 1, "round {round}: revision {revision} beyond {last_ack} + 1");
        ensure!(last_ack > last_seen, "round {round}: no edit acknowledged before the kill");
        let expected = replay(initial, revision - 1).to_document();
        ensure!(doc == expected, "round {round}: document at revision {revision} differs from replay");
        last_seen = revision;
    }
    drop(server);
    Ok(format!("{kills} kills during edit bursts, {} edits persisted, no acknowledged revision lost", last_seen - 1))
}

async fn conflicts(initial: &Scene) -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let client = reqwest::Client::new();
    let server = ServeProcess::start(dir.path());
    put(&client, &server.url, &initial.to_document()).await?;
    let rounds = 20u64;
    let left = [EditOp::TranslatePrimitive { id: "b0".into(), delta: [0.125, 0.0, 0.0] }];
    let right = [EditOp::TranslatePrimitive { id: "b2".into(), delta: [0.0, 0.125, 0.0] }];
    for round in 0..rounds {
        let rev = round + 1;
        let a = edit(&client, &server.url, rev, &left);
        let b = edit(&client, &server.url, rev, &right);
        let (ra, rb) = tokio::join!(a, b);
        let mut statuses = [ra.map_err(|e| e.to_string())?.0, rb.map_err(|e| e.to_string())?.0];
        statuses.sort();
        ensure!(statuses == [200, 409], "round {round}: statuses {statuses:?}");
    }
    let (revision, _) = get(&client, &server.url).await?;
    ensure!(revision == rounds + 1, "final revision {revision} != {}", rounds + 1);
    Ok(format!("{rounds} conflicting pairs, each exactly one 409"))
}

/// Killing the service mid-burst never loses an acknowledged revision, and
/// two edits against the same revision yield exactly one 409.
pub fn integrity() -> Check {
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build().unwrap();
    let initial = demo_scene();
    let restart = rt.block_on(kill_and_restart(&initial))?;
    let conflict = rt.block_on(conflicts(&initial))?;
    Ok(format!("{restart}; {conflict}"))
}
