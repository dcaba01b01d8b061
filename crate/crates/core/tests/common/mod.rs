#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use driverchain::chain::ChainModel;
use driverchain::ingest::{Dataset, StateSequence};
use driverchain::published::{PercentChain, STUDY_N};
use driverchain::recover::recover_chain;
use driverchain::simulate::{sample, Trajectory};
use driverchain::synth::synthesize_dataset;
use driverchain::types::{DriverState, Environment, ScenarioConfig};
use DriverState::*;

pub const FIXTURE_SEED: u64 = 20240601;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn recovered(table: &PercentChain) -> ChainModel {
    recover_chain(table, STUDY_N)
        .expect("published table recovers")
        .to_chain(table.environment.as_str())
        .expect("consistent marginals")
}

pub fn highway() -> ChainModel {
    recovered(&driverchain::published::HIGHWAY)
}

pub fn suburbs() -> ChainModel {
    recovered(&driverchain::published::SUBURBS)
}

pub fn synthetic_dataset() -> Dataset {
    synthesize_dataset(&highway(), &suburbs(), &ScenarioConfig::bundled(), FIXTURE_SEED).expect("sizes match")
}

/// Compare against a checked-in file, rewriting it when `UPDATE_GOLDEN` is set.
pub fn assert_golden(name: &str, actual: &str) {
    let path = fixture_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).expect("write golden");
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e} (run with UPDATE_GOLDEN=1 to create)", path.display()));
    assert_eq!(actual, expected, "{} drifted", path.display());
}

pub fn to_sequences(trajectories: &[Trajectory]) -> Vec<StateSequence> {
    trajectories
        .iter()
        .map(|t| StateSequence::new(format!("t{}", t.index), Environment::Highway, t.states))
        .collect()
}

/// s1 and s2 uniform; s3 | (s1, s2) shifts mass between Takeover and Normal
/// according to s1, so contexts (T, x) and (N, x) are `gap` apart in TV.
pub fn planted_second_order(n: usize, gap: f64, seed: u64) -> Vec<StateSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let third = 1.0 / 3.0;
    (0..n)
        .map(|i| {
            let s1 = DriverState::ALL[rng.random_range(0..3)];
            let s2 = DriverState::ALL[rng.random_range(0..3)];
            let shift = match s1 {
                Takeover => gap / 2.0,
                Alert => 0.0,
                Normal => -gap / 2.0,
            };
            let probs = [third + shift, third, third - shift];
            let u: f64 = rng.random();
            let s3 = if u < probs[0] {
                Takeover
            } else if u < probs[0] + probs[1] {
                Alert
            } else {
                Normal
            };
            StateSequence::new(format!("p{i}"), Environment::Highway, [s1, s2, s3])
        })
        .collect()
}

pub fn sample_sequences(chain: &ChainModel, n: usize, seed: u64) -> Vec<StateSequence> {
    to_sequences(&sample(chain, n, seed).expect("sampleable chain"))
}
