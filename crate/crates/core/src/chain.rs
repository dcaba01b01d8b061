//! Non-stationary first- and second-order chain estimation.
//!
//! Counts are the primary representation; probabilities are derived from
//! them (optionally with additive smoothing) and rows with no mass are
//! reported as undefined rather than filled in.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::StateSequence;
use crate::types::DriverState;

pub const NUM_STATES: usize = 3;

pub type Counts3 = [[u64; NUM_STATES]; NUM_STATES];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("no sequences to estimate from")]
    Empty,
    #[error("{step}: origin marginals {origin:?} do not match previous destination marginals {previous:?}")]
    InconsistentMarginals {
        step: Step,
        origin: [u64; NUM_STATES],
        previous: [u64; NUM_STATES],
    },
    #[error("start counts must only use the Normal row")]
    StartNotNormal,
    #[error("smoothing alpha must be finite and non-negative, got {0}")]
    BadAlpha(f64),
}

/// Which transition a matrix describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    StartTo1,
    Scene1To2,
    Scene2To3,
}

impl Step {
    pub const ALL: [Step; 3] = [Step::StartTo1, Step::Scene1To2, Step::Scene2To3];

    /// Scene index of the origin (0 = Start).
    pub fn origin_scene(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Step::StartTo1 => "start->1",
            Step::Scene1To2 => "1->2",
            Step::Scene2To3 => "2->3",
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Transition counts indexed `[from][to]` by state code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountMatrix {
    pub step: Step,
    pub counts: Counts3,
}

impl CountMatrix {
    pub fn zeros(step: Step) -> Self {
        CountMatrix {
            step,
            counts: [[0; NUM_STATES]; NUM_STATES],
        }
    }

    pub fn get(&self, from: DriverState, to: DriverState) -> u64 {
        self.counts[from.code()][to.code()]
    }

    pub fn row_total(&self, from: usize) -> u64 {
        self.counts[from].iter().sum()
    }

    pub fn row_totals(&self) -> [u64; NUM_STATES] {
        std::array::from_fn(|i| self.row_total(i))
    }

    pub fn col_totals(&self) -> [u64; NUM_STATES] {
        std::array::from_fn(|j| self.counts.iter().map(|r| r[j]).sum())
    }

    pub fn total(&self) -> u64 {
        self.row_totals().iter().sum()
    }

    /// Row-normalized probabilities with additive smoothing `alpha`.
    pub fn to_transition(&self, alpha: f64) -> TransitionMatrix {
        let rows = std::array::from_fn(|i| {
            let denom = self.row_total(i) as f64 + alpha * NUM_STATES as f64;
            (denom > 0.0).then(|| std::array::from_fn(|j| (self.counts[i][j] as f64 + alpha) / denom))
        });
        TransitionMatrix { step: self.step, rows }
    }
}

/// Row-stochastic matrix; `None` rows had no observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub step: Step,
    pub rows: [Option<[f64; NUM_STATES]>; NUM_STATES],
}

impl TransitionMatrix {
    pub fn prob(&self, from: DriverState, to: DriverState) -> Option<f64> {
        self.rows[from.code()].map(|r| r[to.code()])
    }

    pub fn identity(step: Step) -> Self {
        TransitionMatrix {
            step,
            rows: std::array::from_fn(|i| Some(std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 }))),
        }
    }
}

/// Estimated non-stationary chain: Start→1, 1→2, 2→3.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    label: String,
    alpha: f64,
    counts: [CountMatrix; 3],
    steps: [TransitionMatrix; 2],
}

impl ChainModel {
    /// Build from raw count matrices, checking marginal propagation.
    ///
    /// `counts[0]` is Start→1 and may only populate the Normal row.
    pub fn from_counts(label: impl Into<String>, counts: [CountMatrix; 3], alpha: f64) -> Result<Self, ChainError> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(ChainError::BadAlpha(alpha));
        }
        let mut counts = counts;
        for (m, step) in counts.iter_mut().zip(Step::ALL) {
            m.step = step;
        }
        let normal = DriverState::Normal.code();
        if (0..NUM_STATES).any(|i| i != normal && counts[0].row_total(i) != 0) {
            return Err(ChainError::StartNotNormal);
        }
        if counts[0].total() == 0 {
            return Err(ChainError::Empty);
        }
        for k in 1..3 {
            let previous = counts[k - 1].col_totals();
            let origin = counts[k].row_totals();
            if origin != previous {
                return Err(ChainError::InconsistentMarginals {
                    step: counts[k].step,
                    origin,
                    previous,
                });
            }
        }
        let steps = [counts[1].to_transition(alpha), counts[2].to_transition(alpha)];
        Ok(ChainModel {
            label: label.into(),
            alpha,
            counts,
            steps,
        })
    }

    /// Convenience constructor from scene-1 counts and the two step matrices.
    pub fn from_parts(
        label: impl Into<String>,
        scene1: [u64; NUM_STATES],
        step12: Counts3,
        step23: Counts3,
    ) -> Result<Self, ChainError> {
        let mut start = CountMatrix::zeros(Step::StartTo1);
        start.counts[DriverState::Normal.code()] = scene1;
        Self::from_counts(
            label,
            [
                start,
                CountMatrix {
                    step: Step::Scene1To2,
                    counts: step12,
                },
                CountMatrix {
                    step: Step::Scene2To3,
                    counts: step23,
                },
            ],
            0.0,
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Same counts, re-derived with additive smoothing.
    pub fn with_alpha(self, alpha: f64) -> Result<Self, ChainError> {
        Self::from_counts(self.label, self.counts, alpha)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n(&self) -> u64 {
        self.counts[0].total()
    }

    /// Count matrices for Start→1, 1→2 and 2→3.
    pub fn counts(&self) -> &[CountMatrix; 3] {
        &self.counts
    }

    /// Count matrices for the two scene-to-scene steps.
    pub fn step_counts(&self) -> [CountMatrix; 2] {
        [self.counts[1], self.counts[2]]
    }

    pub fn scene1_counts(&self) -> [u64; NUM_STATES] {
        self.counts[0].counts[DriverState::Normal.code()]
    }

    pub fn initial(&self) -> [f64; NUM_STATES] {
        let n = self.n() as f64;
        self.scene1_counts().map(|c| c as f64 / n)
    }

    /// Transition matrices for 1→2 (`0`) and 2→3 (`1`).
    pub fn steps(&self) -> &[TransitionMatrix; 2] {
        &self.steps
    }

    /// Occupancy counts of scene 1, 2, 3.
    pub fn scene_counts(&self) -> [[u64; NUM_STATES]; 3] {
        [
            self.counts[0].col_totals(),
            self.counts[1].col_totals(),
            self.counts[2].col_totals(),
        ]
    }

    /// Exact numerator/denominator of a scene-to-scene probability, ignoring smoothing.
    pub fn raw_fraction(&self, step: usize, from: usize, to: usize) -> (u64, u64) {
        let m = &self.counts[step + 1];
        (m.counts[from][to], m.row_total(from))
    }
}

fn check_nonempty(seqs: &[StateSequence]) -> Result<(), ChainError> {
    if seqs.is_empty() {
        Err(ChainError::Empty)
    } else {
        Ok(())
    }
}

/// Relative-frequency estimate; label taken from the sequences' environment.
pub fn estimate_chain(seqs: &[StateSequence]) -> Result<ChainModel, ChainError> {
    check_nonempty(seqs)?;
    let mut counts = [
        CountMatrix::zeros(Step::StartTo1),
        CountMatrix::zeros(Step::Scene1To2),
        CountMatrix::zeros(Step::Scene2To3),
    ];
    for seq in seqs {
        for (k, m) in counts.iter_mut().enumerate() {
            m.counts[seq.states[k].code()][seq.states[k + 1].code()] += 1;
        }
    }
    let env = seqs[0].environment;
    let label = if seqs.iter().all(|s| s.environment == env) {
        env.as_str().to_string()
    } else {
        "mixed".to_string()
    };
    ChainModel::from_counts(label, counts, 0.0)
}

/// P(s3 | s1, s2) with per-context counts, indexed `[s1][s2][s3]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecondOrderModel {
    pub counts: [[[u64; NUM_STATES]; NUM_STATES]; NUM_STATES],
}

impl SecondOrderModel {
    pub fn context_total(&self, s1: DriverState, s2: DriverState) -> u64 {
        self.counts[s1.code()][s2.code()].iter().sum()
    }

    /// Conditional row for an observed context, `None` if never observed.
    pub fn conditional(&self, s1: DriverState, s2: DriverState) -> Option<[f64; NUM_STATES]> {
        let row = self.counts[s1.code()][s2.code()];
        let total: u64 = row.iter().sum();
        (total > 0).then(|| row.map(|c| c as f64 / total as f64))
    }

    /// First-order P(s3 | s2) pooled over s1.
    pub fn first_order(&self, s2: DriverState) -> Option<[f64; NUM_STATES]> {
        let row: [u64; NUM_STATES] =
            std::array::from_fn(|k| (0..NUM_STATES).map(|i| self.counts[i][s2.code()][k]).sum());
        let total: u64 = row.iter().sum();
        (total > 0).then(|| row.map(|c| c as f64 / total as f64))
    }

    /// Observed contexts in (s1, s2) code order.
    pub fn observed_contexts(&self) -> Vec<(DriverState, DriverState)> {
        DriverState::ALL
            .iter()
            .flat_map(|&a| DriverState::ALL.iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| self.context_total(a, b) > 0)
            .collect()
    }
}

pub fn estimate_second_order(seqs: &[StateSequence]) -> Result<SecondOrderModel, ChainError> {
    check_nonempty(seqs)?;
    let mut counts = [[[0u64; NUM_STATES]; NUM_STATES]; NUM_STATES];
    for seq in seqs {
        let [a, b, c] = seq.scenes();
        counts[a.code()][b.code()][c.code()] += 1;
    }
    Ok(SecondOrderModel { counts })
}
