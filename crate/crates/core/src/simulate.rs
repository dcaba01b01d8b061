//! Forward propagation and seeded trajectory sampling.
//!
//! Distributions are row vectors multiplied on the left of row-stochastic
//! matrices: d_{k+1} = d_k · P_k.
//!
//! Sampling uses ChaCha8 (`rand_chacha::ChaCha8Rng`). Trajectories are drawn
//! in blocks of [`BLOCK`]; block `b` uses the generator seeded with `seed` on
//! stream `b`, so output is bit-identical for a given (chain, n, seed)
//! regardless of how many threads run the blocks.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainModel, Step, TransitionMatrix, NUM_STATES};
use crate::types::DriverState;

pub const BLOCK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("{step} row {state} is undefined but reachable with probability {mass}")]
    UndefinedRow { step: Step, state: DriverState, mass: f64 },
    #[error("cannot compare scene {0} with scene {1}")]
    SceneMismatch(u8, u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateDistribution {
    pub scene: u8,
    /// Indexed by state code (T, A, N).
    pub probs: [f64; NUM_STATES],
}

impl StateDistribution {
    pub fn prob(&self, state: DriverState) -> f64 {
        self.probs[state.code()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub index: u64,
    pub states: [DriverState; 3],
    pub seed: u64,
}

/// Exact scene-1..3 marginals.
pub fn propagate(chain: &ChainModel) -> Result<[StateDistribution; 3], SimError> {
    propagate_matrices(chain.initial(), chain.steps())
}

/// Propagate a scene-1 distribution through two step matrices.
pub fn propagate_matrices(
    initial: [f64; NUM_STATES],
    steps: &[TransitionMatrix; 2],
) -> Result<[StateDistribution; 3], SimError> {
    let mut current = initial;
    let mut out = [StateDistribution { scene: 1, probs: current }; 3];
    for (k, matrix) in steps.iter().enumerate() {
        let mut next = [0.0; NUM_STATES];
        for (i, &mass) in current.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let row = matrix.rows[i].ok_or(SimError::UndefinedRow {
                step: matrix.step,
                state: DriverState::from_code(i).expect("code"),
                mass,
            })?;
            for (j, p) in row.iter().enumerate() {
                next[j] += mass * p;
            }
        }
        current = next;
        out[k + 1] = StateDistribution {
            scene: k as u8 + 2,
            probs: current,
        };
    }
    Ok(out)
}

/// ½ Σ |p − q|.
pub fn total_variation(p: &StateDistribution, q: &StateDistribution) -> Result<f64, SimError> {
    if p.scene != q.scene {
        return Err(SimError::SceneMismatch(p.scene, q.scene));
    }
    Ok(0.5 * p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

fn draw(rng: &mut ChaCha8Rng, probs: &[f64; NUM_STATES]) -> DriverState {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = j;
        if u < acc {
            return DriverState::from_code(j).expect("code");
        }
    }
    DriverState::from_code(last).expect("code")
}

/// `n` independent trajectories [s1, s2, s3].
pub fn sample(chain: &ChainModel, n: usize, seed: u64) -> Result<Vec<Trajectory>, SimError> {
    propagate(chain)?;
    let initial = chain.initial();
    let steps = chain.steps();
    let blocks = n.div_ceil(BLOCK);
    let out: Vec<Vec<Trajectory>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let start = b * BLOCK;
            let end = (start + BLOCK).min(n);
            (start..end)
                .map(|idx| {
                    let s1 = draw(&mut rng, &initial);
                    // rows reachable from sampled states are defined (checked by propagate)
                    let s2 = draw(&mut rng, &steps[0].rows[s1.code()].expect("reachable row"));
                    let s3 = draw(&mut rng, &steps[1].rows[s2.code()].expect("reachable row"));
                    Trajectory {
                        index: idx as u64,
                        states: [s1, s2, s3],
                        seed,
                    }
                })
                .collect()
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

/// Empirical scene marginals of sampled trajectories.
pub fn empirical_marginals(trajectories: &[Trajectory]) -> [StateDistribution; 3] {
    let n = trajectories.len().max(1) as f64;
    std::array::from_fn(|k| {
        let mut probs = [0.0; NUM_STATES];
        for t in trajectories {
            probs[t.states[k].code()] += 1.0;
        }
        StateDistribution {
            scene: k as u8 + 1,
            probs: probs.map(|c| c / n),
        }
    })
}

/// CSV with columns `idx,s1,s2,s3`, states as T/A/N.
pub fn write_trajectories_csv<W: Write>(trajectories: &[Trajectory], mut out: W) -> io::Result<()> {
    writeln!(out, "idx,s1,s2,s3")?;
    for t in trajectories {
        let [a, b, c] = t.states;
        writeln!(out, "{},{},{},{}", t.index, a.letter(), b.letter(), c.letter())?;
    }
    Ok(())
}
