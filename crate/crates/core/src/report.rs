//! Serialized forms of fitted models: JSON documents and CSV tables in the
//! printed layout (rows Alert, Normal, Takeover; columns To Alert, To Normal,
//! To Takeover; scene-1 rows Normal, Alert, Takeover).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::chain::{ChainError, ChainModel, CountMatrix, SecondOrderModel, NUM_STATES};
use crate::published::{INITIAL_ORDER, TABLE_ORDER};
use crate::types::DriverState;

/// JSON form of a [`ChainModel`]. Counts are authoritative; the derived
/// probabilities are written for readers and ignored on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDocument {
    pub label: String,
    pub alpha: f64,
    pub n: u64,
    pub state_order: Vec<String>,
    pub counts: [CountMatrix; 3],
    #[serde(default)]
    pub initial: Vec<f64>,
    #[serde(default)]
    pub steps: Vec<Vec<Option<Vec<f64>>>>,
}

impl ChainDocument {
    pub fn from_chain(chain: &ChainModel) -> Self {
        ChainDocument {
            label: chain.label().to_string(),
            alpha: chain.alpha(),
            n: chain.n(),
            state_order: DriverState::ALL.iter().map(|s| s.letter().to_string()).collect(),
            counts: *chain.counts(),
            initial: chain.initial().to_vec(),
            steps: chain
                .steps()
                .iter()
                .map(|m| m.rows.iter().map(|r| r.map(|r| r.to_vec())).collect())
                .collect(),
        }
    }

    pub fn to_chain(&self) -> Result<ChainModel, ChainError> {
        ChainModel::from_counts(self.label.clone(), self.counts, self.alpha)
    }
}

pub fn chain_to_json(chain: &ChainModel) -> String {
    serde_json::to_string_pretty(&ChainDocument::from_chain(chain)).expect("chain document serializes")
}

#[derive(Debug, thiserror::Error)]
pub enum ChainLoadError {
    #[error("malformed chain JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

pub fn chain_from_json(text: &str) -> Result<ChainModel, ChainLoadError> {
    let doc: ChainDocument = serde_json::from_str(text)?;
    Ok(doc.to_chain()?)
}

fn pct(p: f64) -> String {
    format!("{:.1}", 100.0 * p)
}

/// Scene-1 distribution as `state,percent`, rows Normal, Alert, Takeover.
pub fn initial_csv(chain: &ChainModel) -> String {
    let initial = chain.initial();
    let mut out = String::from("state,percent\n");
    for s in INITIAL_ORDER {
        let _ = writeln!(out, "{},{}", s.name(), pct(initial[s.code()]));
    }
    out
}

/// Both step tables in percent; undefined rows are left empty.
pub fn transitions_csv(chain: &ChainModel) -> String {
    let mut out = String::from("step,from");
    for s in TABLE_ORDER {
        let _ = write!(out, ",To {}", s.name());
    }
    out.push('\n');
    for m in chain.steps() {
        for from in TABLE_ORDER {
            let _ = write!(out, "{},{}", m.step, from.name());
            for to in TABLE_ORDER {
                let cell = m.prob(from, to).map(pct).unwrap_or_default();
                let _ = write!(out, ",{cell}");
            }
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRow {
    pub s1: DriverState,
    pub s2: DriverState,
    pub counts: [u64; NUM_STATES],
    pub probs: [f64; NUM_STATES],
}

/// JSON form of a [`SecondOrderModel`], observed contexts only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderDocument {
    pub label: String,
    pub state_order: Vec<String>,
    pub contexts: Vec<ContextRow>,
}

impl SecondOrderDocument {
    pub fn from_model(label: impl Into<String>, model: &SecondOrderModel) -> Self {
        SecondOrderDocument {
            label: label.into(),
            state_order: DriverState::ALL.iter().map(|s| s.letter().to_string()).collect(),
            contexts: model
                .observed_contexts()
                .into_iter()
                .map(|(s1, s2)| ContextRow {
                    s1,
                    s2,
                    counts: model.counts[s1.code()][s2.code()],
                    probs: model.conditional(s1, s2).expect("observed context"),
                })
                .collect(),
        }
    }
}
