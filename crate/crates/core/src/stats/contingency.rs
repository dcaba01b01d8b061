use serde::{Deserialize, Serialize};

use super::gamma::chi_square_sf;
use super::{StatsError, TestKind, TestResult};

/// Observed counts with expected counts under row/column independence.
///
/// Columns (and rows) with a zero marginal are removed at construction and
/// listed in `dropped`; the remaining cells all have positive expectation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub observed: Vec<Vec<u64>>,
    pub expected: Vec<Vec<f64>>,
    pub dropped: Vec<String>,
}

impl ContingencyTable {
    pub fn new(row_labels: Vec<String>, col_labels: Vec<String>, observed: Vec<Vec<u64>>) -> Result<Self, StatsError> {
        if observed.len() != row_labels.len() || observed.iter().any(|r| r.len() != col_labels.len()) {
            return Err(StatsError::Mismatch(format!(
                "table shape does not match {} row and {} column labels",
                row_labels.len(),
                col_labels.len()
            )));
        }
        let mut dropped = Vec::new();
        let keep_cols: Vec<usize> = (0..col_labels.len())
            .filter(|&j| {
                let nonzero = observed.iter().any(|r| r[j] > 0);
                if !nonzero {
                    dropped.push(format!("column {}", col_labels[j]));
                }
                nonzero
            })
            .collect();
        let keep_rows: Vec<usize> = (0..row_labels.len())
            .filter(|&i| {
                let nonzero = observed[i].iter().any(|&c| c > 0);
                if !nonzero {
                    dropped.push(format!("row {}", row_labels[i]));
                }
                nonzero
            })
            .collect();
        let observed: Vec<Vec<u64>> = keep_rows
            .iter()
            .map(|&i| keep_cols.iter().map(|&j| observed[i][j]).collect())
            .collect();
        let row_totals: Vec<f64> = observed.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
        let col_totals: Vec<f64> = (0..keep_cols.len())
            .map(|j| observed.iter().map(|r| r[j]).sum::<u64>() as f64)
            .collect();
        let grand: f64 = row_totals.iter().sum();
        let expected = row_totals
            .iter()
            .map(|rt| col_totals.iter().map(|ct| rt * ct / grand).collect())
            .collect();
        Ok(ContingencyTable {
            row_labels: keep_rows.iter().map(|&i| row_labels[i].clone()).collect(),
            col_labels: keep_cols.iter().map(|&j| col_labels[j].clone()).collect(),
            observed,
            expected,
            dropped,
        })
    }

    pub fn rows(&self) -> usize {
        self.observed.len()
    }

    pub fn cols(&self) -> usize {
        self.col_labels.len()
    }

    pub fn df(&self) -> u32 {
        (self.rows().saturating_sub(1) * self.cols().saturating_sub(1)) as u32
    }

    /// Σ (O − E)² / E over all retained cells.
    pub fn pearson_statistic(&self) -> f64 {
        self.observed
            .iter()
            .zip(&self.expected)
            .flat_map(|(o, e)| o.iter().zip(e))
            .map(|(&o, &e)| {
                let d = o as f64 - e;
                d * d / e
            })
            .sum()
    }

    pub fn is_testable(&self) -> bool {
        self.rows() >= 2 && self.cols() >= 2
    }
}

pub fn pearson_chi_square(table: &ContingencyTable) -> Result<TestResult, StatsError> {
    if !table.is_testable() {
        return Err(StatsError::Inapplicable(format!(
            "{}×{} table after dropping empty margins",
            table.rows(),
            table.cols()
        )));
    }
    let statistic = table.pearson_statistic();
    let df = table.df();
    let p_value = chi_square_sf(statistic, df)?;
    Ok(TestResult {
        kind: TestKind::Pearson,
        statistic,
        df,
        p_value,
        notes: table.dropped.iter().map(|d| format!("dropped {d}")).collect(),
        tables: vec![table.clone()],
    })
}
