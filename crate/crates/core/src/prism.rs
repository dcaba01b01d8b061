//! DTMC source emission for probabilistic model checkers, plus a small
//! re-parser used to check the emitted text against the chain it came from.
//!
//! The chain is non-stationary, so states are encoded as `(step, s)` with
//! `step ∈ [0..3]` (0 = Start) and `s ∈ [0..2]` (0 = Takeover, 1 = Alert,
//! 2 = Normal). Layout of the emitted model:
//!
//! ```text
//! dtmc
//!
//! module driver
//!   step : [0..3] init 0;
//!   s : [0..2] init 2;
//!
//!   [] step=0 & s=2 -> p : (step'=1)&(s'=0) + ...;
//!   [] step=1 & s=0 -> ...;          one per reachable (step, s), step ∈ {1, 2}
//!   [] step=3 -> 1.000000 : (step'=3);
//! endmodule
//! ```
//!
//! Branches are listed by target `s` and only non-zero branches are printed.
//! Probabilities have six decimals; the rounding residual of a command is
//! added to its last branch so the printed values sum to exactly 1.000000.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainModel, NUM_STATES};
use crate::simulate::{propagate, SimError};

pub const MODULE_NAME: &str = "driver";
const MICROS: u64 = 1_000_000;
/// Allowed gap between a parsed branch and its expected printed value.
pub const CHECK_TOLERANCE: f64 = 5e-7;
/// Allowed gap between a property of the parsed model and of the chain.
///
/// Each printed row is within 2e-6 of the exact row in L1 (two branches off
/// by at most 5e-7, the residual branch by at most their sum), and a reach
/// probability at step 3 passes through at most three printed rows.
pub const PROPERTY_TOLERANCE: f64 = 3e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrismError {
    #[error(transparent)]
    Undefined(#[from] SimError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_error(line: usize, message: impl Into<String>) -> PrismError {
    PrismError::Parse {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub prob: f64,
    pub next_step: u8,
    /// `None` leaves `s` unchanged.
    pub next_state: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    pub step: u8,
    /// `None` matches any `s`.
    pub state: Option<u8>,
    pub branches: Vec<Branch>,
}

impl Command {
    pub fn guard(&self) -> String {
        match self.state {
            Some(s) => format!("step={} & s={s}", self.step),
            None => format!("step={}", self.step),
        }
    }

    fn matches(&self, step: u8, s: u8) -> bool {
        self.step == step && self.state.is_none_or(|x| x == s)
    }
}

/// Step-indexed absorbing DTMC.
#[derive(Debug, Clone, PartialEq)]
pub struct DtmcModel {
    pub init_step: u8,
    pub init_state: u8,
    pub commands: Vec<Command>,
}

fn round_micros(num: u64, den: u64) -> u64 {
    (2 * num * MICROS + den) / (2 * den)
}

/// Printed micro-units for one row: exact half-up rounding, residual on the last branch.
fn printed_row(exact: [Option<u64>; NUM_STATES]) -> [u64; NUM_STATES] {
    let mut out = exact.map(|m| m.unwrap_or(0));
    let total: u64 = out.iter().sum();
    if let Some(last) = (0..NUM_STATES).rev().find(|&j| exact[j].is_some()) {
        out[last] = (out[last] + MICROS).saturating_sub(total);
    }
    out
}

fn row_micros(chain: &ChainModel, step: usize, from: usize) -> [u64; NUM_STATES] {
    let exact = if chain.alpha() == 0.0 {
        let (_, den) = chain.raw_fraction(step, from, 0);
        std::array::from_fn(|to| {
            let (num, _) = chain.raw_fraction(step, from, to);
            (num > 0).then(|| round_micros(num, den))
        })
    } else {
        let row = chain.steps()[step].rows[from].expect("reachable rows are defined");
        row.map(|p| (p > 0.0).then(|| (p * MICROS as f64).round() as u64))
    };
    printed_row(exact)
}

fn initial_micros(chain: &ChainModel) -> [u64; NUM_STATES] {
    let n = chain.n();
    printed_row(chain.scene1_counts().map(|c| (c > 0).then(|| round_micros(c, n))))
}

fn branches_from(step: u8, probs: [f64; NUM_STATES]) -> Vec<Branch> {
    probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(j, &p)| Branch {
            prob: p,
            next_step: step + 1,
            next_state: Some(j as u8),
        })
        .collect()
}

fn absorbing() -> Command {
    Command {
        step: 3,
        state: None,
        branches: vec![Branch {
            prob: 1.0,
            next_step: 3,
            next_state: None,
        }],
    }
}

impl DtmcModel {
    fn build(
        chain: &ChainModel,
        initial: [f64; NUM_STATES],
        row: impl Fn(usize, usize) -> [f64; NUM_STATES],
    ) -> Result<Self, PrismError> {
        let marginals = propagate(chain)?;
        let mut commands = vec![Command {
            step: 0,
            state: Some(2),
            branches: branches_from(0, initial),
        }];
        for (k, marginal) in marginals.iter().take(2).enumerate() {
            for s in 0..NUM_STATES {
                if marginal.probs[s] > 0.0 {
                    commands.push(Command {
                        step: k as u8 + 1,
                        state: Some(s as u8),
                        branches: branches_from(k as u8 + 1, row(k, s)),
                    });
                }
            }
        }
        commands.push(absorbing());
        Ok(DtmcModel {
            init_step: 0,
            init_state: 2,
            commands,
        })
    }

    /// Unrounded model, used as the reference in checks.
    pub fn exact(chain: &ChainModel) -> Result<Self, PrismError> {
        let steps = *chain.steps();
        Self::build(chain, chain.initial(), |k, s| {
            steps[k].rows[s].expect("reachable rows are defined")
        })
    }

    /// Model with six-decimal, residual-corrected probabilities.
    pub fn printed(chain: &ChainModel) -> Result<Self, PrismError> {
        let to_f = |m: [u64; NUM_STATES]| m.map(|v| v as f64 / MICROS as f64);
        Self::build(chain, to_f(initial_micros(chain)), |k, s| to_f(row_micros(chain, k, s)))
    }

    pub fn command(&self, step: u8, s: u8) -> Option<&Command> {
        self.commands.iter().find(|c| c.matches(step, s))
    }

    /// Probability of eventually reaching a state satisfying `target`.
    ///
    /// Returns `Err(guard)` if a reachable state has no command.
    pub fn reach_probability(&self, target: impl Fn(u8, u8) -> bool) -> Result<f64, String> {
        let mut dist: BTreeMap<(u8, u8), f64> = BTreeMap::new();
        dist.insert((self.init_step, self.init_state), 1.0);
        let mut hit = 0.0;
        // step strictly increases until the absorbing layer, so five sweeps suffice
        for _ in 0..5 {
            let mut next: BTreeMap<(u8, u8), f64> = BTreeMap::new();
            for (&(step, s), &mass) in &dist {
                if target(step, s) {
                    hit += mass;
                    continue;
                }
                let cmd = self.command(step, s).ok_or_else(|| format!("step={step} & s={s}"))?;
                for b in &cmd.branches {
                    let key = (b.next_step, b.next_state.unwrap_or(s));
                    *next.entry(key).or_insert(0.0) += mass * b.prob;
                }
            }
            dist = next;
        }
        Ok(hit)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("dtmc\n\n");
        let _ = writeln!(out, "module {MODULE_NAME}");
        let _ = writeln!(out, "  step : [0..3] init {};", self.init_step);
        let _ = writeln!(out, "  s : [0..2] init {};", self.init_state);
        out.push('\n');
        for cmd in &self.commands {
            let branches: Vec<String> = cmd
                .branches
                .iter()
                .map(|b| {
                    let micros = (b.prob * MICROS as f64).round() as u64;
                    let update = match b.next_state {
                        Some(s) => format!("(step'={})&(s'={s})", b.next_step),
                        None => format!("(step'={})", b.next_step),
                    };
                    format!("{}.{:06} : {update}", micros / MICROS, micros % MICROS)
                })
                .collect();
            let _ = writeln!(out, "  [] {} -> {};", cmd.guard(), branches.join(" + "));
        }
        out.push_str("endmodule\n");
        out
    }
}

/// Deterministic DTMC source for `chain`.
pub fn export_dtmc(chain: &ChainModel) -> Result<String, PrismError> {
    Ok(DtmcModel::printed(chain)?.to_text())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Property {
    /// `P=? [ F (step=K & s=S) ]`
    Reach { step: u8, state: u8 },
    /// `P=? [ G (s!=0) ]`
    NeverTakeover,
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Property::Reach { step, state } => write!(f, "P=? [ F (step={step} & s={state}) ]"),
            Property::NeverTakeover => f.write_str("P=? [ G (s!=0) ]"),
        }
    }
}

impl Property {
    pub fn evaluate(&self, model: &DtmcModel) -> Result<f64, String> {
        match *self {
            Property::Reach { step, state } => model.reach_probability(|k, s| k == step && s == state),
            Property::NeverTakeover => model.reach_probability(|_, s| s == 0).map(|p| 1.0 - p),
        }
    }
}

/// Eventual takeover, the nine scene/state reachabilities, never-takeover.
pub fn property_templates() -> Vec<Property> {
    let mut props = vec![Property::Reach { step: 3, state: 0 }];
    for step in 1..=3 {
        for state in 0..NUM_STATES as u8 {
            props.push(Property::Reach { step, state });
        }
    }
    props.push(Property::NeverTakeover);
    props
}

pub fn export_properties(_chain: &ChainModel) -> String {
    property_templates().iter().map(|p| format!("{p}\n")).collect()
}

/// Property values computed directly from the chain.
pub fn evaluate_properties(chain: &ChainModel) -> Result<Vec<(Property, f64)>, PrismError> {
    let model = DtmcModel::exact(chain)?;
    property_templates()
        .into_iter()
        .map(|p| {
            let v = p
                .evaluate(&model)
                .expect("commands exist for every reachable state of an exact model");
            Ok((p, v))
        })
        .collect()
}

// ---- re-parser ----

fn parse_int(text: &str, line: usize) -> Result<u8, PrismError> {
    text.trim()
        .parse()
        .map_err(|_| parse_error(line, format!("expected integer, found {text:?}")))
}

fn parse_decl(text: &str, line: usize) -> Result<(String, u8, u8, u8), PrismError> {
    // name : [lo..hi] init v;
    let bad = || parse_error(line, format!("malformed declaration {text:?}"));
    let body = text.strip_suffix(';').ok_or_else(bad)?;
    let (name, rest) = body.split_once(':').ok_or_else(bad)?;
    let rest = rest.trim();
    let (range, init) = rest.split_once("init").ok_or_else(bad)?;
    let range = range.trim().strip_prefix('[').and_then(|r| r.strip_suffix(']')).ok_or_else(bad)?;
    let (lo, hi) = range.split_once("..").ok_or_else(bad)?;
    Ok((
        name.trim().to_string(),
        parse_int(lo, line)?,
        parse_int(hi, line)?,
        parse_int(init, line)?,
    ))
}

fn parse_guard(text: &str, line: usize) -> Result<(u8, Option<u8>), PrismError> {
    let mut step = None;
    let mut state = None;
    for atom in text.split('&') {
        let (var, val) = atom
            .trim()
            .split_once('=')
            .ok_or_else(|| parse_error(line, format!("malformed guard atom {atom:?}")))?;
        match var.trim() {
            "step" => step = Some(parse_int(val, line)?),
            "s" => state = Some(parse_int(val, line)?),
            other => return Err(parse_error(line, format!("unknown variable {other:?} in guard"))),
        }
    }
    let step = step.ok_or_else(|| parse_error(line, "guard does not constrain step"))?;
    Ok((step, state))
}

fn parse_branch(text: &str, line: usize, from_step: u8) -> Result<Branch, PrismError> {
    let (prob, update) = text
        .split_once(':')
        .ok_or_else(|| parse_error(line, format!("malformed branch {text:?}")))?;
    let prob: f64 = prob
        .trim()
        .parse()
        .map_err(|_| parse_error(line, format!("bad probability {:?}", prob.trim())))?;
    let mut next_step = from_step;
    let mut next_state = None;
    for part in update.split('&') {
        let inner = part
            .trim()
            .strip_prefix('(')
            .and_then(|p| p.strip_suffix(')'))
            .ok_or_else(|| parse_error(line, format!("malformed update {part:?}")))?;
        let (var, val) = inner
            .split_once("'=")
            .ok_or_else(|| parse_error(line, format!("malformed update {part:?}")))?;
        match var.trim() {
            "step" => next_step = parse_int(val, line)?,
            "s" => next_state = Some(parse_int(val, line)?),
            other => return Err(parse_error(line, format!("unknown variable {other:?} in update"))),
        }
    }
    Ok(Branch {
        prob,
        next_step,
        next_state,
    })
}

/// Parse text in the layout emitted by [`export_dtmc`].
pub fn parse_dtmc(text: &str) -> Result<DtmcModel, PrismError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with("//"));
    match lines.next() {
        Some((_, "dtmc")) => {}
        Some((n, other)) => return Err(parse_error(n, format!("expected `dtmc`, found {other:?}"))),
        None => return Err(parse_error(0, "empty model text")),
    }
    match lines.next() {
        Some((_, l)) if l == format!("module {MODULE_NAME}") => {}
        Some((n, other)) => return Err(parse_error(n, format!("expected `module {MODULE_NAME}`, found {other:?}"))),
        None => return Err(parse_error(0, "missing module")),
    }
    let mut init_step = None;
    let mut init_state = None;
    let mut commands = Vec::new();
    let mut closed = false;
    for (n, l) in lines.by_ref() {
        if l == "endmodule" {
            closed = true;
            break;
        }
        if let Some(rest) = l.strip_prefix("[]") {
            let body = rest
                .trim()
                .strip_suffix(';')
                .ok_or_else(|| parse_error(n, "command must end with `;`"))?;
            let (guard, updates) = body
                .split_once("->")
                .ok_or_else(|| parse_error(n, "command missing `->`"))?;
            let (step, state) = parse_guard(guard, n)?;
            let branches = updates
                .split(" + ")
                .map(|b| parse_branch(b, n, step))
                .collect::<Result<Vec<_>, _>>()?;
            commands.push(Command { step, state, branches });
        } else {
            let (name, _, _, init) = parse_decl(l, n)?;
            match name.as_str() {
                "step" => init_step = Some(init),
                "s" => init_state = Some(init),
                other => return Err(parse_error(n, format!("unexpected variable {other:?}"))),
            }
        }
    }
    if !closed {
        return Err(parse_error(0, "missing `endmodule`"));
    }
    Ok(DtmcModel {
        init_step: init_step.ok_or_else(|| parse_error(0, "missing `step` declaration"))?,
        init_state: init_state.ok_or_else(|| parse_error(0, "missing `s` declaration"))?,
        commands,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub property: String,
    pub expected: f64,
    pub actual: Option<f64>,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardMismatch {
    pub guard: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfCheckReport {
    pub properties: Vec<PropertyCheck>,
    pub mismatches: Vec<GuardMismatch>,
}

impl SelfCheckReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty() && self.properties.iter().all(|p| p.ok)
    }
}

/// Re-parse emitted text and compare it with `chain`.
pub fn self_check(text: &str, chain: &ChainModel) -> Result<SelfCheckReport, PrismError> {
    let parsed = parse_dtmc(text)?;
    let reference = DtmcModel::exact(chain)?;
    let printed = DtmcModel::printed(chain)?;
    let mut mismatches = Vec::new();

    // branches are compared with their expected printed values, properties with the exact chain
    for cmd in &printed.commands {
        let guard = cmd.guard();
        let Some(found) = parsed.commands.iter().find(|c| c.step == cmd.step && c.state == cmd.state) else {
            mismatches.push(GuardMismatch {
                guard,
                detail: "command missing".into(),
            });
            continue;
        };
        let sum: f64 = found.branches.iter().map(|b| b.prob).sum();
        if (sum - 1.0).abs() > 1e-9 {
            mismatches.push(GuardMismatch {
                guard: guard.clone(),
                detail: format!("branch probabilities sum to {sum}"),
            });
        }
        let target = |b: &Branch| (b.next_step, b.next_state);
        for b in &cmd.branches {
            let shown: f64 = found.branches.iter().filter(|p| target(p) == target(b)).map(|p| p.prob).sum();
            if (shown - b.prob).abs() > CHECK_TOLERANCE {
                mismatches.push(GuardMismatch {
                    guard: guard.clone(),
                    detail: format!(
                        "branch to {:?} printed {shown:.6}, expected {:.6}",
                        target(b),
                        b.prob
                    ),
                });
            }
        }
        for p in &found.branches {
            if !cmd.branches.iter().any(|b| target(b) == target(p)) && p.prob > 0.0 {
                mismatches.push(GuardMismatch {
                    guard: guard.clone(),
                    detail: format!("unexpected branch to {:?} with {}", target(p), p.prob),
                });
            }
        }
    }
    for cmd in &parsed.commands {
        if !reference.commands.iter().any(|c| c.step == cmd.step && c.state == cmd.state) {
            mismatches.push(GuardMismatch {
                guard: cmd.guard(),
                detail: "command not present in chain".into(),
            });
        }
    }

    let mut properties = Vec::new();
    for prop in property_templates() {
        let expected = prop.evaluate(&reference).expect("exact model is complete");
        let (actual, ok) = match prop.evaluate(&parsed) {
            Ok(v) => (Some(v), (v - expected).abs() <= PROPERTY_TOLERANCE),
            Err(guard) => {
                mismatches.push(GuardMismatch {
                    guard,
                    detail: "reachable state has no command".into(),
                });
                (None, false)
            }
        };
        properties.push(PropertyCheck {
            property: prop.to_string(),
            expected,
            actual,
            ok,
        });
    }
    Ok(SelfCheckReport { properties, mismatches })
}
