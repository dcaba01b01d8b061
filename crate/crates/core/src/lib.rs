//! Non-stationary Markov chain analysis of driver states in automated
//! vehicle scenarios.
//!
//! Raw interaction traces are coded into three-scene state sequences
//! (Takeover / Alert / Normal), counted into Start→1, 1→2, 2→3 transition
//! matrices, tested with chi-square procedures, sampled, and exported as
//! DTMC source for external model checkers.

pub mod chain;
pub mod ingest;
pub mod prism;
pub mod published;
pub mod recover;
pub mod report;
pub mod simulate;
pub mod stats;
pub mod synth;
pub mod types;

pub use chain::{estimate_chain, estimate_second_order, ChainModel, CountMatrix, SecondOrderModel, Step, TransitionMatrix};
pub use ingest::{parse_dataset, parse_file, to_state_sequences, Dataset, StateSequence};
pub use prism::{export_dtmc, export_properties, self_check};
pub use recover::{recover_chain, recover_counts};
pub use simulate::{propagate, sample, total_variation};
pub use synth::synthesize_dataset;
pub use types::{map_state, DriverState, Environment, InteractionTrace, Loa, ScenarioConfig};
