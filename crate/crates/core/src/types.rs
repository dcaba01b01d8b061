//! Domain vocabulary shared by ingestion, estimation and the collection server.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Highest autonomy level a choice may carry (SAE "eyes off").
pub const MAX_LOA_LEVEL: u8 = 3;

/// Number of scenes per scenario.
pub const SCENES_PER_SCENARIO: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("LoA {0} is outside [0, 3]")]
    LoaOutOfRange(Loa),
    #[error("LoA denominator must be positive")]
    ZeroDenominator,
    #[error("cannot parse LoA from {0:?}")]
    LoaSyntax(String),
    #[error("empty choice selection")]
    EmptySelection,
    #[error("unknown choice id {0:?}")]
    UnknownChoice(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipantProfile {
    pub id: String,
    pub age: u32,
    pub sex: Sex,
    #[serde(default)]
    pub gender: Option<String>,
    pub has_license: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoLevel {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioOrder {
    HighwayFirst,
    SuburbsFirst,
}

impl ScenarioOrder {
    pub fn environments(self) -> [Environment; 2] {
        match self {
            ScenarioOrder::HighwayFirst => [Environment::Highway, Environment::Suburbs],
            ScenarioOrder::SuburbsFirst => [Environment::Suburbs, Environment::Highway],
        }
    }
}

/// One cell of the 2×2 between-subjects design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub info_level: InfoLevel,
    pub scenario_order: ScenarioOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Environment {
    Highway,
    Suburbs,
}

impl Environment {
    pub const ALL: [Environment; 2] = [Environment::Highway, Environment::Suburbs];

    pub fn as_str(self) -> &'static str {
        match self {
            Environment::Highway => "highway",
            Environment::Suburbs => "suburbs",
        }
    }
}

impl fmt::Display for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Environment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "highway" => Ok(Environment::Highway),
            "suburbs" => Ok(Environment::Suburbs),
            other => Err(format!("unknown environment {other:?}")),
        }
    }
}

/// Level of autonomy as an exact, reduced fraction.
///
/// Serialized as `"p/q"` (or `"p"` when integral) so thresholds at 1/2 and 2
/// compare exactly after a round-trip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Loa {
    num: u32,
    den: u32,
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Loa {
    pub const ZERO: Loa = Loa { num: 0, den: 1 };
    pub const HALF: Loa = Loa { num: 1, den: 2 };
    pub const TWO: Loa = Loa { num: 2, den: 1 };
    pub const THREE: Loa = Loa { num: 3, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self, DomainError> {
        if den == 0 {
            return Err(DomainError::ZeroDenominator);
        }
        let g = gcd(num, den).max(1);
        let loa = Loa {
            num: num / g,
            den: den / g,
        };
        if loa > Loa::THREE {
            return Err(DomainError::LoaOutOfRange(loa));
        }
        Ok(loa)
    }

    pub fn from_level(level: u8) -> Result<Self, DomainError> {
        Loa::new(u32::from(level), 1)
    }

    pub fn numerator(self) -> u32 {
        self.num
    }

    pub fn denominator(self) -> u32 {
        self.den
    }

    pub fn to_f64(self) -> f64 {
        f64::from(self.num) / f64::from(self.den)
    }

    /// Exact mean of integer levels.
    pub fn mean_of(levels: &[u8]) -> Result<Self, DomainError> {
        if levels.is_empty() {
            return Err(DomainError::EmptySelection);
        }
        let sum: u32 = levels.iter().map(|&l| u32::from(l)).sum();
        Loa::new(sum, levels.len() as u32)
    }
}

impl PartialOrd for Loa {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Loa {
    fn cmp(&self, other: &Self) -> Ordering {
        (u64::from(self.num) * u64::from(other.den)).cmp(&(u64::from(other.num) * u64::from(self.den)))
    }
}

impl fmt::Display for Loa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Loa {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let syntax = || DomainError::LoaSyntax(s.to_string());
        let (num, den) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        let num = num.parse::<u32>().map_err(|_| syntax())?;
        let den = den.parse::<u32>().map_err(|_| syntax())?;
        Loa::new(num, den)
    }
}

impl Serialize for Loa {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Loa {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(u32),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Int(n) => Loa::new(n, 1),
            Repr::Text(s) => s.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// Behavioral state abstracted from LoA. Ordered Takeover < Alert < Normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriverState {
    Takeover,
    Alert,
    Normal,
}

impl DriverState {
    pub const ALL: [DriverState; 3] = [DriverState::Takeover, DriverState::Alert, DriverState::Normal];

    /// Canonical integer code: T=0, A=1, N=2.
    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        DriverState::ALL.get(code).copied()
    }

    pub fn letter(self) -> char {
        match self {
            DriverState::Takeover => 'T',
            DriverState::Alert => 'A',
            DriverState::Normal => 'N',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DriverState::Takeover => "Takeover",
            DriverState::Alert => "Alert",
            DriverState::Normal => "Normal",
        }
    }
}

impl fmt::Display for DriverState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Takeover for LoA ≤ 1/2, Normal for LoA ≥ 2, Alert strictly between.
pub fn map_state(loa: Loa) -> Result<DriverState, DomainError> {
    if loa > Loa::THREE {
        return Err(DomainError::LoaOutOfRange(loa));
    }
    Ok(if loa <= Loa::HALF {
        DriverState::Takeover
    } else if loa >= Loa::TWO {
        DriverState::Normal
    } else {
        DriverState::Alert
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustItem {
    pub item_label: String,
    pub polarity: i8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneResponse {
    pub scene_index: u8,
    pub selected_choice_ids: BTreeSet<String>,
    pub loa: Loa,
    pub confidence: u8,
    pub comfort: i8,
    pub trust_items: Vec<TrustItem>,
    pub trust_score: i32,
    #[serde(default)]
    pub free_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioResponses {
    pub environment: Environment,
    pub scenes: Vec<SceneResponse>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionTrace {
    pub profile: ParticipantProfile,
    pub condition: Condition,
    pub scenarios: Vec<ScenarioResponses>,
    /// Raw questionnaire answers (DBQ, AV-NARS); stored, never scored.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub questionnaires: BTreeMap<String, Vec<i32>>,
}

impl InteractionTrace {
    pub fn scenario(&self, env: Environment) -> Option<&ScenarioResponses> {
        self.scenarios.iter().find(|s| s.environment == env)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub id: String,
    pub text: String,
    pub loa_level: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfoPanel {
    pub items: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub scene_index: u8,
    pub narration: String,
    pub image: String,
    pub choices: Vec<Choice>,
    pub high_info: InfoPanel,
    pub low_info: InfoPanel,
}

impl SceneConfig {
    pub fn choice(&self, id: &str) -> Option<&Choice> {
        self.choices.iter().find(|c| c.id == id)
    }

    /// First choice carrying the given level, in declaration order.
    pub fn choice_with_level(&self, level: u8) -> Option<&Choice> {
        self.choices.iter().find(|c| c.loa_level == level)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvironmentConfig {
    pub environment: Environment,
    pub scenes: Vec<SceneConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("scenario config: {0}")]
pub struct ConfigError(pub String);

/// Scenario text, choices and interface variants for both environments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub trust_items: Vec<TrustItem>,
    pub scenarios: Vec<EnvironmentConfig>,
}

const DEFAULT_CONFIG: &str = include_str!("../assets/scenario.json");

impl ScenarioConfig {
    /// The configuration bundled with the crate.
    pub fn bundled() -> Self {
        Self::from_json(DEFAULT_CONFIG).expect("bundled scenario config is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for env in Environment::ALL {
            let count = self.scenarios.iter().filter(|s| s.environment == env).count();
            if count != 1 {
                return Err(ConfigError(format!("expected one {env} scenario, found {count}")));
            }
        }
        for scenario in &self.scenarios {
            let mut indices: Vec<u8> = scenario.scenes.iter().map(|s| s.scene_index).collect();
            indices.sort_unstable();
            if indices != [1, 2, 3] {
                return Err(ConfigError(format!(
                    "{} must define scenes 1, 2, 3 exactly once",
                    scenario.environment
                )));
            }
            for scene in &scenario.scenes {
                let at = format!("{} scene {}", scenario.environment, scene.scene_index);
                if scene.choices.len() < 2 {
                    return Err(ConfigError(format!("{at} needs at least two choices")));
                }
                let mut ids = BTreeSet::new();
                for choice in &scene.choices {
                    if choice.loa_level > MAX_LOA_LEVEL {
                        return Err(ConfigError(format!(
                            "{at}: choice {:?} has level {} > 3",
                            choice.id, choice.loa_level
                        )));
                    }
                    if !ids.insert(choice.id.as_str()) {
                        return Err(ConfigError(format!("{at}: duplicate choice id {:?}", choice.id)));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn scene(&self, env: Environment, scene_index: u8) -> Option<&SceneConfig> {
        self.scenarios
            .iter()
            .find(|s| s.environment == env)?
            .scenes
            .iter()
            .find(|s| s.scene_index == scene_index)
    }
}

/// Exact mean of the levels attached to the selected choices.
pub fn loa_from_choices<'a, I>(selected: I, scene: &SceneConfig) -> Result<Loa, DomainError>
where
    I: IntoIterator<Item = &'a str>,
{
    let levels = selected
        .into_iter()
        .map(|id| {
            scene
                .choice(id)
                .map(|c| c.loa_level)
                .ok_or_else(|| DomainError::UnknownChoice(id.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Loa::mean_of(&levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn loa(n: u32, d: u32) -> Loa {
        Loa::new(n, d).unwrap()
    }

    #[test]
    fn map_state_thresholds() {
        assert_eq!(map_state(loa(1, 2)).unwrap(), DriverState::Takeover);
        assert_eq!(map_state(loa(2, 1)).unwrap(), DriverState::Normal);
        assert_eq!(map_state(loa(3, 1)).unwrap(), DriverState::Normal);
        assert_eq!(map_state(Loa::mean_of(&[0, 3]).unwrap()).unwrap(), DriverState::Alert);
        assert_eq!(map_state(Loa::ZERO).unwrap(), DriverState::Takeover);
        // just above and below the boundaries
        assert_eq!(map_state(loa(501, 1000)).unwrap(), DriverState::Alert);
        assert_eq!(map_state(loa(1999, 1000)).unwrap(), DriverState::Alert);
    }

    #[test]
    fn loa_out_of_range() {
        assert!(matches!(Loa::new(7, 2), Err(DomainError::LoaOutOfRange(_))));
        assert!(matches!(Loa::new(1, 0), Err(DomainError::ZeroDenominator)));
    }

    #[test]
    fn loa_text_round_trip() {
        for text in ["0", "1/2", "5/3", "3"] {
            let value: Loa = text.parse().unwrap();
            assert_eq!(value.to_string(), text);
        }
        assert_eq!("2/4".parse::<Loa>().unwrap(), Loa::HALF);
        let json: Loa = serde_json::from_str("3").unwrap();
        assert_eq!(json, Loa::THREE);
        assert!(serde_json::from_str::<Loa>("\"x\"").is_err());
    }

    fn scene() -> SceneConfig {
        let choices = [("a", 3), ("b", 0), ("c", 1), ("d", 2)]
            .into_iter()
            .map(|(id, lvl)| Choice {
                id: id.into(),
                text: id.into(),
                loa_level: lvl,
            })
            .collect();
        SceneConfig {
            scene_index: 1,
            narration: String::new(),
            image: String::new(),
            choices,
            high_info: InfoPanel { items: vec![] },
            low_info: InfoPanel { items: vec![] },
        }
    }

    #[test]
    fn loa_from_choice_sets() {
        let sc = scene();
        assert_eq!(loa_from_choices(["a"], &sc).unwrap(), Loa::THREE);
        assert_eq!(loa_from_choices(["b", "c"], &sc).unwrap(), Loa::HALF);
        assert_eq!(loa_from_choices(["c", "d", "a"], &sc).unwrap(), Loa::TWO);
        assert_eq!(loa_from_choices(Vec::<&str>::new(), &sc), Err(DomainError::EmptySelection));
        assert_eq!(
            loa_from_choices(["zz"], &sc),
            Err(DomainError::UnknownChoice("zz".into()))
        );
    }

    #[test]
    fn bundled_config_is_valid() {
        let config = ScenarioConfig::bundled();
        for env in Environment::ALL {
            for idx in 1..=3 {
                let scene = config.scene(env, idx).unwrap();
                for level in [0, 1, 3] {
                    assert!(scene.choice_with_level(level).is_some());
                }
            }
        }
        assert_eq!(config.scene(Environment::Highway, 1).unwrap().choices.len(), 6);
    }

    #[test]
    fn config_rejects_bad_level() {
        let mut config = ScenarioConfig::bundled();
        config.scenarios[0].scenes[0].choices[0].loa_level = 4;
        assert!(config.validate().is_err());
    }

    proptest! {
        #[test]
        fn map_state_partitions_unit_range(num in 0u32..=3000, den in 1u32..=1000) {
            prop_assume!(u64::from(num) <= 3 * u64::from(den));
            let l = loa(num, den);
            let state = map_state(l).unwrap();
            let x = l.to_f64();
            let expected = if 2 * u64::from(l.numerator()) <= u64::from(l.denominator()) {
                DriverState::Takeover
            } else if u64::from(l.numerator()) >= 2 * u64::from(l.denominator()) {
                DriverState::Normal
            } else {
                DriverState::Alert
            };
            prop_assert_eq!(state, expected);
            prop_assert!((0.0..=3.0).contains(&x));
        }

        #[test]
        fn loa_mean_is_permutation_invariant_and_bounded(mut levels in proptest::collection::vec(0u8..=3, 1..8)) {
            let a = Loa::mean_of(&levels).unwrap();
            levels.reverse();
            let b = Loa::mean_of(&levels).unwrap();
            prop_assert_eq!(a, b);
            let lo = Loa::from_level(*levels.iter().min().unwrap()).unwrap();
            let hi = Loa::from_level(*levels.iter().max().unwrap()).unwrap();
            prop_assert!(lo <= a && a <= hi);
        }
    }
}
