//! Chi-square machinery and the chain validation tests.
//!
//! Table construction convention used throughout:
//! * group comparisons pool the 1→2 and 2→3 transition cells side by side
//!   (up to 18 columns); Start→1 is excluded since Start is always Normal;
//! * columns with a zero marginal are dropped and df reduced accordingly;
//! * everything dropped or skipped is listed in [`TestResult::notes`].

mod contingency;
mod gamma;
mod markov;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use contingency::{pearson_chi_square, ContingencyTable};
pub use gamma::{chi_square_cdf, chi_square_sf, gamma_p, gamma_q, ln_gamma};
pub use markov::{compare_groups, test_homogeneity, test_order, test_stationarity};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("test inapplicable: {0}")]
    Inapplicable(String),
    #[error("mismatched inputs: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Pearson,
    Compare,
    Stationarity,
    Homogeneity,
    Order,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub kind: TestKind,
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
    pub notes: Vec<String>,
    pub tables: Vec<ContingencyTable>,
}

impl TestResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }

    /// Plain-text summary with the underlying tables.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{:?} test: statistic = {:.4}, df = {}, p = {:.6}\n",
            self.kind, self.statistic, self.df, self.p_value
        );
        for note in &self.notes {
            out.push_str(&format!("  note: {note}\n"));
        }
        for table in &self.tables {
            let width = table.row_labels.iter().map(String::len).max().unwrap_or(0).max(6);
            out.push_str(&format!("  {:width$}", ""));
            for c in &table.col_labels {
                out.push_str(&format!(" {c:>12}"));
            }
            out.push('\n');
            for (label, row) in table.row_labels.iter().zip(&table.observed) {
                out.push_str(&format!("  {label:width$}"));
                for v in row {
                    out.push_str(&format!(" {v:>12}"));
                }
                out.push('\n');
            }
        }
        out
    }
}
