//! Line-delimited JSON trace ingestion.
//!
//! Each non-blank line holds one participant. A record is decoded, validated
//! against the [`ScenarioConfig`] and coded (LoA, trust score) on its own; a bad
//! record is rejected with its line number and never aborts the file.
//!
//! `loa` and `trust_score` may be omitted on input (the collection UI sends raw
//! choice ids only). When present they must agree with the recomputed values.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{
    loa_from_choices, map_state, Condition, DriverState, Environment, InteractionTrace, Loa,
    ParticipantProfile, ScenarioConfig, ScenarioResponses, SceneResponse, TrustItem,
    SCENES_PER_SCENARIO,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {source_name}: {error}")]
    Io {
        source_name: String,
        #[source]
        error: io::Error,
    },
    #[error("participant {participant}: {message}")]
    Validation { participant: String, message: String },
}

/// One validation problem located by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        FieldError {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub source: String,
    pub line: u64,
    pub reason: String,
    pub errors: Vec<FieldError>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub sources: Vec<String>,
    pub rejections: Vec<Rejection>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    pub traces: Vec<InteractionTrace>,
    pub provenance: Provenance,
}

/// Start state followed by the states of scenes 1..=3.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSequence {
    pub participant_id: String,
    pub environment: Environment,
    pub states: [DriverState; 4],
}

impl StateSequence {
    pub fn new(participant_id: impl Into<String>, environment: Environment, scenes: [DriverState; 3]) -> Self {
        StateSequence {
            participant_id: participant_id.into(),
            environment,
            states: [DriverState::Normal, scenes[0], scenes[1], scenes[2]],
        }
    }

    /// States of scenes 1, 2, 3.
    pub fn scenes(&self) -> [DriverState; 3] {
        [self.states[1], self.states[2], self.states[3]]
    }
}

/// JSON Schema of one trace line, shared with the collection UI.
pub const TRACE_SCHEMA: &str = include_str!("../assets/trace.schema.json");

// Wire form: the stored schema with the coded fields optional.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    scene_index: u8,
    selected_choice_ids: BTreeSet<String>,
    #[serde(default)]
    loa: Option<Loa>,
    confidence: u8,
    comfort: i8,
    trust_items: Vec<TrustItem>,
    #[serde(default)]
    trust_score: Option<i32>,
    #[serde(default)]
    free_text: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    environment: Environment,
    scenes: Vec<RawScene>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrace {
    profile: ParticipantProfile,
    condition: Condition,
    scenarios: Vec<RawScenario>,
    #[serde(default)]
    questionnaires: std::collections::BTreeMap<String, Vec<i32>>,
}

fn missing_field_name(message: &str) -> Option<String> {
    let rest = message.split_once("missing field `")?.1;
    Some(rest.split_once('`')?.0.to_string())
}

/// Decode one JSON record and code it against `config`.
pub fn decode_trace(text: &str, config: &ScenarioConfig) -> Result<InteractionTrace, Vec<FieldError>> {
    let raw: RawTrace = serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        let field = missing_field_name(&message).unwrap_or_else(|| "$".to_string());
        vec![FieldError::new(field, message)]
    })?;
    code_trace(raw, config)
}

fn code_trace(raw: RawTrace, config: &ScenarioConfig) -> Result<InteractionTrace, Vec<FieldError>> {
    let mut errors = Vec::new();
    if raw.profile.id.trim().is_empty() {
        errors.push(FieldError::new("profile.id", "must be non-empty"));
    }
    if raw.profile.age < 18 {
        errors.push(FieldError::new(
            "profile.age",
            format!("must be at least 18, got {}", raw.profile.age),
        ));
    }

    let expected_order = raw.condition.scenario_order.environments();
    let found: Vec<Environment> = raw.scenarios.iter().map(|s| s.environment).collect();
    if found != expected_order {
        errors.push(FieldError::new(
            "scenarios",
            format!(
                "expected environments {:?} for {:?}, got {:?}",
                expected_order, raw.condition.scenario_order, found
            ),
        ));
    }

    let mut scenarios = Vec::with_capacity(raw.scenarios.len());
    for (si, scenario) in raw.scenarios.into_iter().enumerate() {
        let env = scenario.environment;
        let base = format!("scenarios[{si}]");
        let mut present = [false; SCENES_PER_SCENARIO];
        let mut scenes = Vec::with_capacity(SCENES_PER_SCENARIO);
        for (ci, scene) in scenario.scenes.into_iter().enumerate() {
            let at = format!("{base}.scenes[{ci}]");
            let idx = scene.scene_index;
            if !(1..=SCENES_PER_SCENARIO as u8).contains(&idx) {
                errors.push(FieldError::new(
                    format!("{at}.scene_index"),
                    format!("must be 1, 2 or 3, got {idx}"),
                ));
                continue;
            }
            if std::mem::replace(&mut present[usize::from(idx) - 1], true) {
                errors.push(FieldError::new(
                    format!("{at}.scene_index"),
                    format!("{env} scene {idx} appears twice"),
                ));
                continue;
            }
            if let Some(coded) = code_scene(scene, env, config, &at, &mut errors) {
                scenes.push(coded);
            }
        }
        for (i, seen) in present.iter().enumerate() {
            if !seen {
                errors.push(FieldError::new(
                    format!("{base}.scenes"),
                    format!("{env} is missing scene {}", i + 1),
                ));
            }
        }
        scenes.sort_by_key(|s| s.scene_index);
        scenarios.push(ScenarioResponses {
            environment: env,
            scenes,
        });
    }

    if errors.is_empty() {
        Ok(InteractionTrace {
            profile: raw.profile,
            condition: raw.condition,
            scenarios,
            questionnaires: raw.questionnaires,
        })
    } else {
        Err(errors)
    }
}

fn code_scene(
    scene: RawScene,
    env: Environment,
    config: &ScenarioConfig,
    at: &str,
    errors: &mut Vec<FieldError>,
) -> Option<SceneResponse> {
    let before = errors.len();
    let Some(scene_config) = config.scene(env, scene.scene_index) else {
        errors.push(FieldError::new(
            format!("{at}.scene_index"),
            format!("no configured {env} scene {}", scene.scene_index),
        ));
        return None;
    };
    if !(1..=5).contains(&scene.confidence) {
        errors.push(FieldError::new(
            format!("{at}.confidence"),
            format!("must be 1..5, got {}", scene.confidence),
        ));
    }
    if !(-1..=1).contains(&scene.comfort) {
        errors.push(FieldError::new(
            format!("{at}.comfort"),
            format!("must be -1, 0 or 1, got {}", scene.comfort),
        ));
    }
    for (ti, item) in scene.trust_items.iter().enumerate() {
        if item.polarity != 1 && item.polarity != -1 {
            errors.push(FieldError::new(
                format!("{at}.trust_items[{ti}].polarity"),
                format!("must be +1 or -1, got {}", item.polarity),
            ));
        }
    }
    let trust_sum: i32 = scene.trust_items.iter().map(|t| i32::from(t.polarity)).sum();
    if let Some(score) = scene.trust_score {
        if score != trust_sum {
            errors.push(FieldError::new(
                format!("{at}.trust_score"),
                format!("{score} does not equal item polarity sum {trust_sum}"),
            ));
        }
    }
    let loa = match loa_from_choices(scene.selected_choice_ids.iter().map(String::as_str), scene_config) {
        Ok(loa) => {
            if let Some(given) = scene.loa {
                if given != loa {
                    errors.push(FieldError::new(
                        format!("{at}.loa"),
                        format!("{given} disagrees with the coded value {loa}"),
                    ));
                }
            }
            Some(loa)
        }
        Err(e) => {
            errors.push(FieldError::new(format!("{at}.selected_choice_ids"), e.to_string()));
            None
        }
    };
    if errors.len() != before {
        return None;
    }
    Some(SceneResponse {
        scene_index: scene.scene_index,
        selected_choice_ids: scene.selected_choice_ids,
        loa: loa?,
        confidence: scene.confidence,
        comfort: scene.comfort,
        trust_items: scene.trust_items,
        trust_score: trust_sum,
        free_text: scene.free_text,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// Subset of traces satisfying `predicate`, in original order.
    pub fn slice<P>(&self, predicate: P) -> Dataset
    where
        P: Fn(&ParticipantProfile, &Condition) -> bool,
    {
        Dataset {
            traces: self
                .traces
                .iter()
                .filter(|t| predicate(&t.profile, &t.condition))
                .cloned()
                .collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for trace in &self.traces {
            serde_json::to_writer(&mut out, trace)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// Merge another dataset; traces whose id already exists are rejected.
    pub fn extend(&mut self, other: Dataset) {
        let mut seen: HashSet<String> = self.traces.iter().map(|t| t.profile.id.clone()).collect();
        self.provenance.sources.extend(other.provenance.sources);
        self.provenance.rejections.extend(other.provenance.rejections);
        for trace in other.traces {
            if seen.insert(trace.profile.id.clone()) {
                self.traces.push(trace);
            } else {
                self.provenance.rejections.push(Rejection {
                    source: "<merge>".into(),
                    line: 0,
                    reason: format!("duplicate participant id {:?}", trace.profile.id),
                    errors: vec![FieldError::new("profile.id", "duplicate")],
                });
            }
        }
    }
}

/// Parse a line-delimited stream. Only read failures are errors.
pub fn parse_dataset<R: BufRead>(
    reader: R,
    source_name: &str,
    config: &ScenarioConfig,
) -> Result<Dataset, IngestError> {
    let mut dataset = Dataset {
        traces: Vec::new(),
        provenance: Provenance {
            sources: vec![source_name.to_string()],
            rejections: Vec::new(),
        },
    };
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|error| IngestError::Io {
            source_name: source_name.to_string(),
            error,
        })?;
        let line_no = i as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let reject = |errors: Vec<FieldError>| Rejection {
            source: source_name.to_string(),
            line: line_no,
            reason: errors
                .iter()
                .map(|e| format!("{}: {}", e.field, e.message))
                .collect::<Vec<_>>()
                .join("; "),
            errors,
        };
        match decode_trace(&line, config) {
            Ok(trace) => {
                if ids.insert(trace.profile.id.clone()) {
                    dataset.traces.push(trace);
                } else {
                    let msg = format!("duplicate participant id {:?}", trace.profile.id);
                    dataset
                        .provenance
                        .rejections
                        .push(reject(vec![FieldError::new("profile.id", msg)]));
                }
            }
            Err(errors) => dataset.provenance.rejections.push(reject(errors)),
        }
    }
    Ok(dataset)
}

pub fn parse_file(path: &Path, config: &ScenarioConfig) -> Result<Dataset, IngestError> {
    let name = path.display().to_string();
    let file = File::open(path).map_err(|error| IngestError::Io {
        source_name: name.clone(),
        error,
    })?;
    parse_dataset(BufReader::new(file), &name, config)
}

pub fn parse_files<P: AsRef<Path>>(paths: &[P], config: &ScenarioConfig) -> Result<Dataset, IngestError> {
    let mut dataset = Dataset::default();
    for path in paths {
        dataset.extend(parse_file(path.as_ref(), config)?);
    }
    Ok(dataset)
}

/// One state sequence per trace for `env`, Start fixed to Normal.
pub fn to_state_sequences(dataset: &Dataset, env: Environment) -> Result<Vec<StateSequence>, IngestError> {
    dataset
        .traces
        .iter()
        .map(|trace| {
            let invalid = |message: String| IngestError::Validation {
                participant: trace.profile.id.clone(),
                message,
            };
            let scenario = trace
                .scenario(env)
                .ok_or_else(|| invalid(format!("no {env} scenario")))?;
            let mut scenes = [DriverState::Normal; 3];
            for (k, slot) in scenes.iter_mut().enumerate() {
                let idx = k as u8 + 1;
                let scene = scenario
                    .scenes
                    .iter()
                    .find(|s| s.scene_index == idx)
                    .ok_or_else(|| invalid(format!("{env} scene {idx} missing")))?;
                *slot = map_state(scene.loa).map_err(|e| invalid(e.to_string()))?;
            }
            Ok(StateSequence::new(trace.profile.id.clone(), env, scenes))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{InfoLevel, Sex};

    fn config() -> ScenarioConfig {
        ScenarioConfig::bundled()
    }

    fn scene_json(idx: u8, choice: &str) -> serde_json::Value {
        serde_json::json!({
            "scene_index": idx,
            "selected_choice_ids": [choice],
            "confidence": 4,
            "comfort": 1,
            "trust_items": [{"item_label": "safe", "polarity": 1}],
        })
    }

    fn record(id: &str, hw: [&str; 3], sb: [&str; 3]) -> serde_json::Value {
        serde_json::json!({
            "profile": {"id": id, "age": 30, "sex": "female", "has_license": true},
            "condition": {"info_level": "high", "scenario_order": "highway_first"},
            "scenarios": [
                {"environment": "highway", "scenes": [scene_json(1, hw[0]), scene_json(2, hw[1]), scene_json(3, hw[2])]},
                {"environment": "suburbs", "scenes": [scene_json(1, sb[0]), scene_json(2, sb[1]), scene_json(3, sb[2])]},
            ]
        })
    }

    const ALL_NOTHING_HW: [&str; 3] = ["hw1_nothing", "hw2_nothing", "hw3_nothing"];
    const ALL_NOTHING_SB: [&str; 3] = ["sb1_nothing", "sb2_nothing", "sb3_nothing"];

    fn parse(text: &str) -> Dataset {
        parse_dataset(text.as_bytes(), "mem", &config()).unwrap()
    }

    #[test]
    fn empty_input() {
        let ds = parse("");
        assert!(ds.is_empty());
        assert!(ds.provenance.rejections.is_empty());
    }

    #[test]
    fn missing_confidence_rejected_with_field() {
        let good = record("p1", ALL_NOTHING_HW, ALL_NOTHING_SB);
        let mut bad = record("p2", ALL_NOTHING_HW, ALL_NOTHING_SB);
        bad["scenarios"][0]["scenes"][1]
            .as_object_mut()
            .unwrap()
            .remove("confidence");
        let ds = parse(&format!("{good}\n{bad}\n"));
        assert_eq!(ds.len(), 1);
        let rej = &ds.provenance.rejections;
        assert_eq!(rej.len(), 1);
        assert_eq!(rej[0].line, 2);
        assert_eq!(rej[0].errors[0].field, "confidence");
    }

    #[test]
    fn codes_loa_and_trust() {
        let ds = parse(&record("p1", ["hw1_phone", "hw2_hands_on_wheel", "hw3_take_over"], ALL_NOTHING_SB).to_string());
        let scenes = &ds.traces[0].scenarios[0].scenes;
        assert_eq!(scenes[0].loa, Loa::THREE);
        assert_eq!(scenes[1].loa, Loa::from_level(1).unwrap());
        assert_eq!(scenes[2].trust_score, 1);
    }

    #[test]
    fn state_sequences_from_loa() {
        let ds = parse(&record("p1", ALL_NOTHING_HW, ALL_NOTHING_SB).to_string());
        let seq = to_state_sequences(&ds, Environment::Highway).unwrap();
        assert_eq!(seq[0].states, [DriverState::Normal; 4]);

        // (1, 0, 0) -> N, A, T, T
        let ds = parse(
            &record("p2", ["hw1_hands_on_wheel", "hw2_take_over", "hw3_take_over"], ALL_NOTHING_SB).to_string(),
        );
        let seq = to_state_sequences(&ds, Environment::Highway).unwrap();
        use DriverState::*;
        assert_eq!(seq[0].states, [Normal, Alert, Takeover, Takeover]);
    }

    #[test]
    fn multi_choice_averaging() {
        let mut rec = record("p1", ALL_NOTHING_HW, ALL_NOTHING_SB);
        // levels 0 and 3 -> 3/2 -> Alert
        rec["scenarios"][0]["scenes"][0]["selected_choice_ids"] = serde_json::json!(["hw1_take_over", "hw1_nothing"]);
        let ds = parse(&rec.to_string());
        let seq = to_state_sequences(&ds, Environment::Highway).unwrap();
        assert_eq!(seq[0].states[1], DriverState::Alert);
        assert_eq!(ds.traces[0].scenarios[0].scenes[0].loa.to_string(), "3/2");
    }

    #[test]
    fn missing_scene_names_scene() {
        let mut rec = record("p1", ALL_NOTHING_HW, ALL_NOTHING_SB);
        rec["scenarios"][1]["scenes"].as_array_mut().unwrap().pop();
        let errs = decode_trace(&rec.to_string(), &config()).unwrap_err();
        assert!(errs.iter().any(|e| e.field == "scenarios[1].scenes" && e.message.contains("scene 3")), "{errs:?}");
    }

    #[test]
    fn wrong_order_and_values_rejected() {
        let mut rec = record("p1", ALL_NOTHING_HW, ALL_NOTHING_SB);
        rec["condition"]["scenario_order"] = "suburbs_first".into();
        rec["scenarios"][0]["scenes"][0]["comfort"] = 2.into();
        rec["scenarios"][0]["scenes"][1]["loa"] = "1".into();
        rec["scenarios"][0]["scenes"][2]["selected_choice_ids"] = serde_json::json!(["nope"]);
        rec["profile"]["age"] = 17.into();
        let errs = decode_trace(&rec.to_string(), &config()).unwrap_err();
        let fields: Vec<&str> = errs.iter().map(|e| e.field.as_str()).collect();
        for f in [
            "profile.age",
            "scenarios",
            "scenarios[0].scenes[0].comfort",
            "scenarios[0].scenes[1].loa",
            "scenarios[0].scenes[2].selected_choice_ids",
        ] {
            assert!(fields.contains(&f), "{f} not in {fields:?}");
        }
    }

    #[test]
    fn trust_score_must_match() {
        let mut rec = record("p1", ALL_NOTHING_HW, ALL_NOTHING_SB);
        rec["scenarios"][0]["scenes"][0]["trust_score"] = 3.into();
        assert!(decode_trace(&rec.to_string(), &config()).is_err());
        rec["scenarios"][0]["scenes"][0]["trust_score"] = 1.into();
        assert!(decode_trace(&rec.to_string(), &config()).is_ok());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let a = record("p1", ALL_NOTHING_HW, ALL_NOTHING_SB);
        let ds = parse(&format!("{a}\n{a}\n"));
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.provenance.rejections[0].line, 2);
    }

    #[test]
    fn invalid_json_line_does_not_abort() {
        let a = record("p1", ALL_NOTHING_HW, ALL_NOTHING_SB);
        let ds = parse(&format!("{{not json\n\n{a}\n"));
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.provenance.rejections.len(), 1);
        assert_eq!(ds.provenance.rejections[0].line, 1);
    }

    #[test]
    fn serialize_parse_round_trip() {
        let a = record("p1", ALL_NOTHING_HW, ["sb1_take_over", "sb2_look_around", "sb3_hands_on_wheel"]);
        let b = record("p2", ["hw1_hands_on_wheel", "hw2_take_over", "hw3_take_over"], ALL_NOTHING_SB);
        let ds = parse(&format!("{a}\n{b}\n"));
        let again = parse(&ds.to_jsonl());
        assert_eq!(ds.traces, again.traces);
    }

    #[test]
    fn slice_composes() {
        let mut lines = String::new();
        for (i, sex) in ["female", "male", "female"].iter().enumerate() {
            let mut r = record(&format!("p{i}"), ALL_NOTHING_HW, ALL_NOTHING_SB);
            r["profile"]["sex"] = (*sex).into();
            if i == 2 {
                r["condition"]["info_level"] = "low".into();
            }
            lines.push_str(&format!("{r}\n"));
        }
        let ds = parse(&lines);
        assert_eq!(ds.slice(|_, _| true).traces, ds.traces);
        let female = |p: &ParticipantProfile, _: &Condition| p.sex == Sex::Female;
        let high = |_: &ParticipantProfile, c: &Condition| c.info_level == InfoLevel::High;
        let both = ds.slice(|p, c| female(p, c) && high(p, c));
        assert_eq!(both.traces, ds.slice(female).slice(high).traces);
        assert_eq!(both.len(), 1);
    }
}
