use std::fs;
use std::path::Path;

use reqwest::StatusCode;
use serde_json::{json, Value};

use driverchain::ingest::{parse_file, to_state_sequences};
use driverchain::types::{DriverState, Environment, ScenarioConfig};
use driverchain_cli::server::{Server, SESSIONS_FILE};

fn session(id: &str) -> Value {
    let scene = |env: &str, k: u8| {
        json!({
            "scene_index": k,
            "selected_choice_ids": [format!("{env}{k}_nothing")],
            "confidence": 3,
            "comfort": 0,
            "trust_items": [{"item_label": "safe", "polarity": 1}]
        })
    };
    json!({
        "profile": {"id": id, "age": 41, "sex": "female", "has_license": true},
        "condition": {"info_level": "high", "scenario_order": "highway_first"},
        "scenarios": [
            {"environment": "highway", "scenes": [scene("hw", 1), scene("hw", 2), scene("hw", 3)]},
            {"environment": "suburbs", "scenes": [scene("sb", 1), scene("sb", 2), scene("sb", 3)]}
        ]
    })
}

async fn start(dir: &Path) -> String {
    let server = Server::bind(ScenarioConfig::bundled(), dir, "127.0.0.1:0".parse().unwrap(), None)
        .await
        .unwrap();
    let addr = server.local_addr().unwrap();
    tokio::spawn(server.serve());
    format!("http://{addr}")
}

fn lines(dir: &Path) -> Vec<String> {
    fs::read_to_string(dir.join(SESSIONS_FILE))
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

#[tokio::test]
async fn config_and_schema_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let base = start(dir.path()).await;
    let config: ScenarioConfig = reqwest::get(format!("{base}/api/config")).await.unwrap().json().await.unwrap();
    assert_eq!(config, ScenarioConfig::bundled());
    let schema: Value = reqwest::get(format!("{base}/api/schema")).await.unwrap().json().await.unwrap();
    assert_eq!(schema["title"], "InteractionTrace");
    let index = reqwest::get(format!("{base}/")).await.unwrap();
    assert_eq!(index.status(), StatusCode::OK);
}

#[tokio::test]
async fn valid_post_appends_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let base = start(dir.path()).await;
    let client = reqwest::Client::new();
    let resp = client
        .post(format!("{base}/api/sessions"))
        .json(&session("P-1"))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::CREATED);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["id"], "P-1");
    assert_eq!(lines(dir.path()).len(), 1);

    let again = client
        .post(format!("{base}/api/sessions"))
        .json(&session("P-1"))
        .send()
        .await
        .unwrap();
    assert_eq!(again.status(), StatusCode::CONFLICT);
    assert_eq!(lines(dir.path()).len(), 1);
}

#[tokio::test]
async fn missing_scene_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let base = start(dir.path()).await;
    let mut body = session("P-2");
    body["scenarios"][1]["scenes"].as_array_mut().unwrap().pop();
    let resp = reqwest::Client::new()
        .post(format!("{base}/api/sessions"))
        .json(&body)
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY);
    let errors: Value = resp.json().await.unwrap();
    let text = errors["errors"].to_string();
    assert!(text.contains("missing scene 3"), "{text}");
    assert!(text.contains("scenarios[1]"), "{text}");
    assert_eq!(lines(dir.path()).len(), 0);
}

#[tokio::test]
async fn malformed_json_is_unprocessable() {
    let dir = tempfile::tempdir().unwrap();
    let base = start(dir.path()).await;
    let resp = reqwest::Client::new()
        .post(format!("{base}/api/sessions"))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY);
    let errors: Value = resp.json().await.unwrap();
    assert_eq!(errors["errors"][0]["field"], "$");
}

#[tokio::test]
async fn empty_id_is_assigned() {
    let dir = tempfile::tempdir().unwrap();
    let base = start(dir.path()).await;
    let resp = reqwest::Client::new()
        .post(format!("{base}/api/sessions"))
        .json(&session(""))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::CREATED);
    let body: Value = resp.json().await.unwrap();
    let id = body["id"].as_str().unwrap();
    assert_eq!(id.len(), 36);
    assert!(lines(dir.path())[0].contains(id));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_posts_give_whole_lines() {
    let dir = tempfile::tempdir().unwrap();
    let base = start(dir.path()).await;
    let client = reqwest::Client::new();
    let handles: Vec<_> = (0..50)
        .map(|i| {
            let client = client.clone();
            let url = format!("{base}/api/sessions");
            tokio::spawn(async move { client.post(url).json(&session(&format!("C-{i}"))).send().await.unwrap().status() })
        })
        .collect();
    for h in handles {
        assert_eq!(h.await.unwrap(), StatusCode::CREATED);
    }
    let stored = lines(dir.path());
    assert_eq!(stored.len(), 50);
    let mut ids: Vec<String> = stored
        .iter()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["profile"]["id"].as_str().unwrap().to_string())
        .collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 50);
}

#[tokio::test]
async fn do_nothing_session_ingests_as_all_normal() {
    let dir = tempfile::tempdir().unwrap();
    let base = start(dir.path()).await;
    let resp = reqwest::Client::new()
        .post(format!("{base}/api/sessions"))
        .json(&session("P-3"))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::CREATED);
    let dataset = parse_file(&dir.path().join(SESSIONS_FILE), &ScenarioConfig::bundled()).unwrap();
    assert!(dataset.provenance.rejections.is_empty());
    for env in Environment::ALL {
        let seqs = to_state_sequences(&dataset, env).unwrap();
        assert_eq!(seqs[0].states, [DriverState::Normal; 4]);
    }
}

#[tokio::test]
async fn unwritable_directory_fails_at_startup() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    fs::write(&file, "x").unwrap();
    let result = Server::bind(ScenarioConfig::bundled(), &file.join("sessions"), "127.0.0.1:0".parse().unwrap(), None).await;
    assert!(result.is_err());
}

#[tokio::test]
async fn restart_keeps_existing_sessions() {
    let dir = tempfile::tempdir().unwrap();
    for id in ["R-1", "R-2"] {
        let base = start(dir.path()).await;
        let resp = reqwest::Client::new()
            .post(format!("{base}/api/sessions"))
            .json(&session(id))
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), StatusCode::CREATED);
    }
    assert_eq!(lines(dir.path()).len(), 2);
}
