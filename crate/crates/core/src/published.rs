//! Published percentage tables of the 206-participant driver study.
//!
//! Values are kept in the printed layout: the initial table lists N, A, T and
//! the transition tables have rows Alert, Normal, Takeover with columns
//! To Alert, To Normal, To Takeover. [`PercentChain::in_code_order`] converts
//! to state-code order (T, A, N).

use crate::types::{DriverState, Environment};

/// Participants in the published study.
pub const STUDY_N: u64 = 206;

/// Row and column order used by the printed transition tables.
pub const TABLE_ORDER: [DriverState; 3] = [DriverState::Alert, DriverState::Normal, DriverState::Takeover];

/// Row order used by the printed initial-distribution tables.
pub const INITIAL_ORDER: [DriverState; 3] = [DriverState::Normal, DriverState::Alert, DriverState::Takeover];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PercentChain {
    pub environment: Environment,
    /// Scene-1 distribution in N, A, T order.
    pub initial: [f64; 3],
    /// 1→2 and 2→3, rows/columns in Alert, Normal, Takeover order.
    pub steps: [[[f64; 3]; 3]; 2],
}

pub const HIGHWAY: PercentChain = PercentChain {
    environment: Environment::Highway,
    initial: [63.5, 27.8, 8.7],
    steps: [
        [[52.6, 3.5, 43.9], [37.4, 35.1, 27.5], [16.7, 0.0, 83.3]],
        [[47.6, 20.7, 31.7], [35.4, 29.2, 35.4], [14.5, 9.2, 76.3]],
    ],
};

pub const SUBURBS: PercentChain = PercentChain {
    environment: Environment::Suburbs,
    initial: [89.8, 8.3, 1.9],
    steps: [
        [[35.3, 11.8, 52.9], [25.4, 68.1, 6.5], [25.0, 0.0, 75.0]],
        [[37.0, 48.1, 14.8], [12.5, 80.5, 7.0], [25.0, 25.0, 50.0]],
    ],
};

impl PercentChain {
    pub fn for_environment(env: Environment) -> PercentChain {
        match env {
            Environment::Highway => HIGHWAY,
            Environment::Suburbs => SUBURBS,
        }
    }

    /// Scene-1 distribution and step matrices re-indexed by state code.
    pub fn in_code_order(&self) -> ([f64; 3], [[[f64; 3]; 3]; 2]) {
        let mut initial = [0.0; 3];
        for (k, s) in INITIAL_ORDER.iter().enumerate() {
            initial[s.code()] = self.initial[k];
        }
        let steps = self.steps.map(|table| {
            let mut m = [[0.0; 3]; 3];
            for (r, from) in TABLE_ORDER.iter().enumerate() {
                for (c, to) in TABLE_ORDER.iter().enumerate() {
                    m[from.code()][to.code()] = table[r][c];
                }
            }
            m
        });
        (initial, steps)
    }
}
