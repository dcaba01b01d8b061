//! Integer count recovery from one-decimal percentage tables.
//!
//! Given a row of printed percentages and the row total, enumerate every
//! composition of the total and keep those whose half-up one-decimal
//! percentages match the printed row. Exactly one survivor is required.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainError, ChainModel, NUM_STATES};
use crate::published::PercentChain;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecoverError {
    #[error("row {row}: no integer counts with total {total} round to {percents:?}")]
    Inconsistent {
        row: usize,
        total: u64,
        percents: Vec<f64>,
    },
    #[error("row {row}: {} count vectors with total {total} round to {percents:?}: {candidates:?}", candidates.len())]
    Ambiguous {
        row: usize,
        total: u64,
        percents: Vec<f64>,
        candidates: Vec<Vec<u64>>,
    },
    #[error("{rows} percentage rows but {totals} row totals")]
    Shape { rows: usize, totals: usize },
    #[error("invalid percentage {0}")]
    BadPercent(f64),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Percentage of `count / total` in tenths of a percent, rounded half-up.
pub fn percent_tenths(count: u64, total: u64) -> u64 {
    assert!(total > 0, "percentage of an empty row");
    (2000 * count + total) / (2 * total)
}

fn to_tenths(percent: f64) -> Result<u64, RecoverError> {
    if !percent.is_finite() || !(0.0..=100.0).contains(&percent) {
        return Err(RecoverError::BadPercent(percent));
    }
    Ok((percent * 10.0).round() as u64)
}

/// Every count vector with the given total whose rounded percentages match.
pub fn candidate_rows(percents: &[f64], total: u64) -> Result<Vec<Vec<u64>>, RecoverError> {
    let targets = percents.iter().map(|&p| to_tenths(p)).collect::<Result<Vec<_>, _>>()?;
    let mut found = Vec::new();
    let mut current = Vec::with_capacity(targets.len());
    search(&targets, total, total, &mut current, &mut found);
    Ok(found)
}

fn search(targets: &[u64], total: u64, remaining: u64, current: &mut Vec<u64>, found: &mut Vec<Vec<u64>>) {
    let k = current.len();
    if k == targets.len() {
        if remaining == 0 {
            found.push(current.clone());
        }
        return;
    }
    if total == 0 {
        // Empty row: only the all-zero composition exists; accept it only
        // if the printed row is all zeros.
        if targets[k] == 0 {
            current.push(0);
            search(targets, total, remaining, current, found);
            current.pop();
        }
        return;
    }
    for c in 0..=remaining {
        if percent_tenths(c, total) == targets[k] {
            current.push(c);
            search(targets, total, remaining - c, current, found);
            current.pop();
        }
    }
}

/// Unique integer row with `total` matching the printed `percents`.
pub fn recover_row(row: usize, percents: &[f64], total: u64) -> Result<Vec<u64>, RecoverError> {
    let mut candidates = candidate_rows(percents, total)?;
    match candidates.len() {
        0 => Err(RecoverError::Inconsistent {
            row,
            total,
            percents: percents.to_vec(),
        }),
        1 => Ok(candidates.pop().expect("one candidate")),
        _ => Err(RecoverError::Ambiguous {
            row,
            total,
            percents: percents.to_vec(),
            candidates,
        }),
    }
}

/// Recover a whole table row by row.
pub fn recover_counts(percent_rows: &[Vec<f64>], row_totals: &[u64]) -> Result<Vec<Vec<u64>>, RecoverError> {
    if percent_rows.len() != row_totals.len() {
        return Err(RecoverError::Shape {
            rows: percent_rows.len(),
            totals: row_totals.len(),
        });
    }
    percent_rows
        .iter()
        .zip(row_totals)
        .enumerate()
        .map(|(i, (row, &total))| recover_row(i, row, total))
        .collect()
}

/// Composition of `total` closest to `percents` in squared error.
///
/// Used when no composition rounds to the printed row exactly.
pub fn nearest_row(row: usize, percents: &[f64], total: u64) -> Result<Vec<u64>, RecoverError> {
    for &p in percents {
        to_tenths(p)?;
    }
    let mut best: Vec<Vec<u64>> = Vec::new();
    let mut best_err = f64::INFINITY;
    let mut current = Vec::with_capacity(percents.len());
    nearest_search(percents, total, total, &mut current, &mut best, &mut best_err);
    match best.len() {
        1 => Ok(best.pop().expect("one candidate")),
        0 => Err(RecoverError::Inconsistent {
            row,
            total,
            percents: percents.to_vec(),
        }),
        _ => Err(RecoverError::Ambiguous {
            row,
            total,
            percents: percents.to_vec(),
            candidates: best,
        }),
    }
}

fn nearest_search(
    percents: &[f64],
    total: u64,
    remaining: u64,
    current: &mut Vec<u64>,
    best: &mut Vec<Vec<u64>>,
    best_err: &mut f64,
) {
    if current.len() + 1 == percents.len() {
        current.push(remaining);
        let err: f64 = current
            .iter()
            .zip(percents)
            .map(|(&c, &p)| {
                let d = 100.0 * c as f64 / total.max(1) as f64 - p;
                d * d
            })
            .sum();
        if err < *best_err - 1e-12 {
            *best_err = err;
            best.clear();
            best.push(current.clone());
        } else if (err - *best_err).abs() <= 1e-12 {
            best.push(current.clone());
        }
        current.pop();
        return;
    }
    for c in 0..=remaining {
        current.push(c);
        nearest_search(percents, total, remaining - c, current, best, best_err);
        current.pop();
    }
}

/// Recovered counts for one environment, in state-code order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveredChain {
    pub scene1: [u64; NUM_STATES],
    pub steps: [[[u64; NUM_STATES]; NUM_STATES]; 2],
    /// Rows that had no exact solution and were fitted by [`nearest_row`].
    #[serde(default)]
    pub approximated: Vec<String>,
}

impl RecoveredChain {
    pub fn to_chain(&self, label: impl Into<String>) -> Result<ChainModel, ChainError> {
        ChainModel::from_parts(label, self.scene1, self.steps[0], self.steps[1])
    }
}

fn to_array(v: Vec<u64>) -> [u64; NUM_STATES] {
    v.try_into().expect("three-state row")
}

/// Recover a full chain: the initial row from `n`, then each step's rows
/// from the destination marginals of the previous step.
///
/// The initial row falls back to [`nearest_row`] when no exact solution
/// exists; transition rows must match exactly.
pub fn recover_chain(table: &PercentChain, n: u64) -> Result<RecoveredChain, RecoverError> {
    let (initial, steps) = table.in_code_order();
    let mut approximated = Vec::new();
    let scene1 = match recover_row(0, &initial, n) {
        Ok(row) => to_array(row),
        Err(RecoverError::Inconsistent { .. }) => {
            approximated.push(format!("{} scene-1 distribution", table.environment));
            to_array(nearest_row(0, &initial, n)?)
        }
        Err(e) => return Err(e),
    };
    let mut origin = scene1;
    let mut out = [[[0u64; NUM_STATES]; NUM_STATES]; 2];
    for (k, step) in steps.iter().enumerate() {
        let rows: Vec<Vec<f64>> = step.iter().map(|r| r.to_vec()).collect();
        let recovered = recover_counts(&rows, &origin)?;
        for (i, row) in recovered.into_iter().enumerate() {
            out[k][i] = to_array(row);
        }
        origin = std::array::from_fn(|j| out[k].iter().map(|r| r[j]).sum());
    }
    Ok(RecoveredChain {
        scene1,
        steps: out,
        approximated,
    })
}
