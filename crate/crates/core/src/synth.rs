//! Fixture generation: datasets whose trajectories reproduce given counts.
//!
//! The trajectory multiset depends only on the counts. Scene-2 destinations
//! are dealt to arrivals (sorted by scene-1 state) in a smooth interleaved
//! order so no origin group gets a contiguous block of one destination.
//! The seed only shuffles participant order and pairs the two environments,
//! and fills the non-behavioral fields.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::chain::{ChainModel, NUM_STATES};
use crate::ingest::{Dataset, Provenance};
use crate::types::{
    Condition, DriverState, Environment, InfoLevel, InteractionTrace, Loa, ParticipantProfile,
    ScenarioConfig, ScenarioOrder, ScenarioResponses, SceneResponse, Sex,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("highway has {highway} participants but suburbs has {suburbs}")]
    SizeMismatch { highway: u64, suburbs: u64 },
    #[error("scenario config has no {env} scene {scene} choice at level {level}")]
    MissingChoice { env: Environment, scene: u8, level: u8 },
}

/// Deal `counts[j]` copies of each state in an evenly spread order.
fn spread(counts: [u64; NUM_STATES]) -> Vec<DriverState> {
    let total: u64 = counts.iter().sum();
    let mut dealt = [0u64; NUM_STATES];
    (1..=total)
        .map(|i| {
            // largest deficit against the ideal prefix share; ties to lower code
            let j = (0..NUM_STATES)
                .filter(|&j| dealt[j] < counts[j])
                .max_by(|&a, &b| {
                    let da = (counts[a] * i) as i128 - (dealt[a] * total) as i128;
                    let db = (counts[b] * i) as i128 - (dealt[b] * total) as i128;
                    da.cmp(&db).then(b.cmp(&a))
                })
                .expect("remaining mass");
            dealt[j] += 1;
            DriverState::from_code(j).expect("state code")
        })
        .collect()
}

/// The trajectory multiset implied by a chain's counts, in canonical order.
pub fn trajectories_from_counts(chain: &ChainModel) -> Vec<[DriverState; 3]> {
    let [_, step12, step23] = chain.counts();
    let mut scene12: Vec<(DriverState, DriverState)> = Vec::new();
    for from in DriverState::ALL {
        for to in spread(step12.counts[from.code()]) {
            scene12.push((from, to));
        }
    }
    let mut out = Vec::with_capacity(scene12.len());
    for mid in DriverState::ALL {
        let arrivals: Vec<DriverState> = scene12.iter().filter(|(_, b)| *b == mid).map(|(a, _)| *a).collect();
        let dests = spread(step23.counts[mid.code()]);
        debug_assert_eq!(arrivals.len(), dests.len());
        out.extend(arrivals.into_iter().zip(dests).map(|(a, c)| [a, mid, c]));
    }
    out.sort();
    out
}

fn level_for(state: DriverState) -> u8 {
    match state {
        DriverState::Takeover => 0,
        DriverState::Alert => 1,
        DriverState::Normal => 3,
    }
}

fn scene_responses(
    env: Environment,
    states: [DriverState; 3],
    config: &ScenarioConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ScenarioResponses, SynthError> {
    let mut scenes = Vec::with_capacity(3);
    for (k, state) in states.iter().enumerate() {
        let idx = k as u8 + 1;
        let level = level_for(*state);
        let choice = config
            .scene(env, idx)
            .and_then(|s| s.choice_with_level(level))
            .ok_or(SynthError::MissingChoice { env, scene: idx, level })?;
        let trust_items: Vec<_> = config
            .trust_items
            .iter()
            .filter(|_| rng.random_bool(0.3))
            .cloned()
            .collect();
        let trust_score = trust_items.iter().map(|t| i32::from(t.polarity)).sum();
        scenes.push(SceneResponse {
            scene_index: idx,
            selected_choice_ids: [choice.id.clone()].into_iter().collect(),
            loa: Loa::from_level(level).expect("level within range"),
            confidence: rng.random_range(1..=5),
            comfort: rng.random_range(-1..=1),
            trust_items,
            trust_score,
            free_text: None,
        });
    }
    Ok(ScenarioResponses { environment: env, scenes })
}

/// Build a dataset whose per-environment counts equal the given chains'.
///
/// Sex alternates Female/Male and the four conditions cycle over the
/// shuffled participant order, so group sizes are ⌈n/2⌉ / ⌊n/2⌋ and n/4 each.
pub fn synthesize_dataset(
    highway: &ChainModel,
    suburbs: &ChainModel,
    config: &ScenarioConfig,
    seed: u64,
) -> Result<Dataset, SynthError> {
    if highway.n() != suburbs.n() {
        return Err(SynthError::SizeMismatch {
            highway: highway.n(),
            suburbs: suburbs.n(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hw = trajectories_from_counts(highway);
    let mut sb = trajectories_from_counts(suburbs);
    hw.shuffle(&mut rng);
    sb.shuffle(&mut rng);

    let conditions = [
        (InfoLevel::High, ScenarioOrder::HighwayFirst),
        (InfoLevel::High, ScenarioOrder::SuburbsFirst),
        (InfoLevel::Low, ScenarioOrder::HighwayFirst),
        (InfoLevel::Low, ScenarioOrder::SuburbsFirst),
    ];
    let width = hw.len().to_string().len().max(3);
    let mut traces = Vec::with_capacity(hw.len());
    for (i, (h, s)) in hw.into_iter().zip(sb).enumerate() {
        let (info_level, scenario_order) = conditions[i % 4];
        let by_env = |env| match env {
            Environment::Highway => h,
            Environment::Suburbs => s,
        };
        let mut scenarios = Vec::with_capacity(2);
        for env in scenario_order.environments() {
            scenarios.push(scene_responses(env, by_env(env), config, &mut rng)?);
        }
        traces.push(InteractionTrace {
            profile: ParticipantProfile {
                id: format!("S{:0width$}", i + 1),
                age: rng.random_range(20..=73),
                sex: if i % 2 == 0 { Sex::Female } else { Sex::Male },
                gender: None,
                has_license: true,
            },
            condition: Condition {
                info_level,
                scenario_order,
            },
            scenarios,
            questionnaires: Default::default(),
        });
    }
    Ok(Dataset {
        traces,
        provenance: Provenance {
            sources: vec![format!("synthetic(seed={seed})")],
            rejections: Vec::new(),
        },
    })
}
