//! The published trace schema agrees with what ingestion accepts.

mod common;

use driverchain::ingest::{decode_trace, TRACE_SCHEMA};
use driverchain::types::ScenarioConfig;
use serde_json::{json, Value};

fn validator() -> jsonschema::Validator {
    let schema: Value = serde_json::from_str(TRACE_SCHEMA).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn raw_trace() -> Value {
    let scene = |env: &str, k: u8| {
        json!({
            "scene_index": k,
            "selected_choice_ids": [format!("{env}{k}_nothing")],
            "confidence": 4,
            "comfort": 1,
            "trust_items": [{"item_label": "safe", "polarity": 1}]
        })
    };
    json!({
        "profile": {"id": "P1", "age": 30, "sex": "male", "has_license": true},
        "condition": {"info_level": "low", "scenario_order": "suburbs_first"},
        "scenarios": [
            {"environment": "suburbs", "scenes": [scene("sb", 1), scene("sb", 2), scene("sb", 3)]},
            {"environment": "highway", "scenes": [scene("hw", 1), scene("hw", 2), scene("hw", 3)]}
        ]
    })
}

#[test]
fn stored_fixture_lines_validate() {
    let v = validator();
    let text = std::fs::read_to_string(common::fixture_path("synthetic_206.jsonl")).unwrap();
    for (i, line) in text.lines().enumerate() {
        let value: Value = serde_json::from_str(line).unwrap();
        assert!(v.is_valid(&value), "line {}", i + 1);
    }
}

#[test]
fn raw_ui_payload_validates_and_ingests() {
    let raw = raw_trace();
    assert!(validator().is_valid(&raw));
    let trace = decode_trace(&raw.to_string(), &ScenarioConfig::bundled()).unwrap();
    assert_eq!(trace.scenarios[0].scenes[2].trust_score, 1);
}

#[test]
fn schema_and_ingestion_both_reject_missing_scene() {
    let mut raw = raw_trace();
    raw["scenarios"][1]["scenes"].as_array_mut().unwrap().pop();
    assert!(!validator().is_valid(&raw));
    assert!(decode_trace(&raw.to_string(), &ScenarioConfig::bundled()).is_err());
}

#[test]
fn schema_rejects_unknown_fields_like_ingestion() {
    let mut raw = raw_trace();
    raw["profile"]["nickname"] = json!("x");
    assert!(!validator().is_valid(&raw));
    assert!(decode_trace(&raw.to_string(), &ScenarioConfig::bundled()).is_err());
}
