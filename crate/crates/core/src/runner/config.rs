use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::adapters::AdapterSpec;
use crate::agents::{AgentKind, DqnConfig, QConfig};
use crate::encoders::EncoderSpec;
use crate::env::{EnvState, EnvironmentRef, EnvironmentSpec};
use crate::encoders::EncoderKind;
use crate::instructions::{Decision, SessionConfig, SubGoal};

pub const CONFIG_VERSION: u32 = 1;

const PUBLISHED: &[(&str, &str)] = &[
    ("baseline_umaze", include_str!("../../data/published/baseline_umaze.toml")),
    ("baseline_double_t", include_str!("../../data/published/baseline_double_t.toml")),
    ("baseline_frozenlake", include_str!("../../data/published/baseline_frozenlake.toml")),
    ("baseline_classroom", include_str!("../../data/published/baseline_classroom.toml")),
    ("smoke_umaze", include_str!("../../data/published/smoke_umaze.toml")),
];

/// One agent x adapter pairing. Each expands into a plain arm and, when the
/// config carries sub-goals, an instructed arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSpec {
    pub agent: AgentKind,
    pub adapter: AdapterSpec,
}

/// A sub-goal as written in a config file: ordered, with its state ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapingGoal {
    pub text: String,
    pub states: Vec<String>,
}

impl From<&SubGoal> for ShapingGoal {
    fn from(g: &SubGoal) -> Self {
        Self {
            text: g.instruction.text.clone(),
            states: g.states.iter().map(|s| s.id.clone()).collect(),
        }
    }
}

/// A review decision written into a config so a session can be replayed
/// without a person at the keyboard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedDecision {
    pub order: u32,
    /// `accept`, `reject` or `edit`.
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl ScriptedDecision {
    pub fn from_decision(order: u32, d: &Decision) -> Self {
        let (action, text) = match d {
            Decision::Accept => ("accept", None),
            Decision::Reject => ("reject", None),
            Decision::Edit(t) => ("edit", Some(t.clone())),
        };
        Self {
            order,
            action: action.into(),
            text,
        }
    }

    pub fn decision(&self) -> Result<Decision, RunError> {
        match (self.action.as_str(), &self.text) {
            ("accept", _) => Ok(Decision::Accept),
            ("reject", _) => Ok(Decision::Reject),
            ("edit", Some(t)) => Ok(Decision::Edit(t.clone())),
            (other, _) => Err(RunError::Config(format!(
                "decision {other:?} for instruction {} (accept, reject, or edit with text)",
                self.order
            ))),
        }
    }
}

/// Instructions to ground before training. The resulting confirmed
/// sub-goals replace `sub_goals`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionSpec {
    /// Free text: one instruction per line, or a goal for the planner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    /// Published session name or session file path, used instead of `input`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub import: Option<String>,
    /// Adapter whose texts form the corpus searched by the matcher.
    pub adapter: AdapterSpec,
    #[serde(default = "bow")]
    pub encoder: EncoderSpec,
    #[serde(default)]
    pub session: SessionConfig,
    /// Applied in order before anything still open is accepted.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decisions: Vec<ScriptedDecision>,
}

fn bow() -> EncoderSpec {
    EncoderSpec {
        id: EncoderKind::Bow,
        dim: 0,
        vocab: None,
        model: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    /// Share of training episodes over which epsilon decays.
    pub fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.05,
            fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub name: String,
    pub environment: EnvironmentRef,
    pub train_episodes: u32,
    pub train_repeats: u32,
    pub test_episodes: u32,
    pub test_repeats: u32,
    /// One per training repeat.
    pub seeds: Vec<u64>,
    /// One per test repeat.
    pub test_seeds: Vec<u64>,
    pub shaping_bonus: f64,
    /// Training episodes, counted from the first, during which sub-goals pay.
    pub instruction_episode_budget: u32,
    /// Concurrent repeats; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub encoder: EncoderSpec,
    #[serde(default)]
    pub epsilon: EpsilonSchedule,
    #[serde(default)]
    pub qlearn: QConfig,
    #[serde(default)]
    pub dqn: DqnConfig,
    pub arms: Vec<ArmSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sub_goals: Vec<ShapingGoal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instructions: Option<InstructionSpec>,
}

impl ExperimentConfig {
    /// Defaults for `environment`: one numeric Q-learning arm, no sub-goals,
    /// seeds `0..repeats`.
    pub fn new(name: &str, environment: EnvironmentRef, train_episodes: u32, repeats: u32) -> Self {
        let train_episodes = train_episodes.max(1);
        Self {
            version: CONFIG_VERSION,
            name: name.into(),
            environment,
            train_episodes,
            train_repeats: repeats,
            test_episodes: 1000,
            test_repeats: repeats,
            seeds: (0..repeats as u64).collect(),
            test_seeds: (0..repeats as u64).map(|s| 1000 + s).collect(),
            shaping_bonus: 0.5,
            instruction_episode_budget: train_episodes / 5,
            workers: 0,
            encoder: EncoderSpec::default(),
            epsilon: EpsilonSchedule::default(),
            qlearn: QConfig::default(),
            dqn: DqnConfig::default(),
            arms: vec![ArmSpec {
                agent: AgentKind::Qlearn,
                adapter: AdapterSpec::new(crate::adapters::AdapterKind::Numeric),
            }],
            sub_goals: Vec::new(),
            instructions: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        let config: Self = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), RunError> {
        std::fs::write(path, self.to_toml()).map_err(|e| RunError::Io(path.display().to_string(), e))
    }

    /// Replaces the sub-goals with confirmed ones from a session.
    pub fn with_sub_goals(mut self, goals: &[SubGoal]) -> Self {
        self.sub_goals = goals.iter().map(ShapingGoal::from).collect();
        self
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("version {} is not supported (expected {CONFIG_VERSION})", self.version));
        }
        for (what, n) in [
            ("train_episodes", self.train_episodes),
            ("train_repeats", self.train_repeats),
            ("test_episodes", self.test_episodes),
            ("test_repeats", self.test_repeats),
        ] {
            if n == 0 {
                return bad(format!("{what} must be positive"));
            }
        }
        if self.seeds.len() != self.train_repeats as usize {
            return bad(format!(
                "{} seeds for {} training repeats",
                self.seeds.len(),
                self.train_repeats
            ));
        }
        if self.test_seeds.len() != self.test_repeats as usize {
            return bad(format!(
                "{} test_seeds for {} test repeats",
                self.test_seeds.len(),
                self.test_repeats
            ));
        }
        if self.seeds.iter().chain(&self.test_seeds).any(|&s| s > i64::MAX as u64) {
            return bad("seeds must fit in a signed 64-bit integer".into());
        }
        if !(self.shaping_bonus.is_finite() && self.shaping_bonus >= 0.0) {
            return bad("shaping_bonus must be a non-negative number".into());
        }
        if self.instruction_episode_budget > self.train_episodes {
            return bad("instruction_episode_budget exceeds train_episodes".into());
        }
        if self.arms.is_empty() {
            return bad("no arms configured".into());
        }
        let e = &self.epsilon;
        if ![e.start, e.end].iter().all(|p| (0.0..=1.0).contains(p)) || !(e.fraction > 0.0 && e.fraction <= 1.0) {
            return bad("epsilon start/end must lie in [0, 1] and fraction in (0, 1]".into());
        }
        if self.sub_goals.iter().any(|g| g.states.is_empty()) {
            return bad("every sub-goal needs at least one state".into());
        }
        if let Some(spec) = &self.instructions {
            if spec.input.is_some() == spec.import.is_some() {
                return bad("instructions need exactly one of input or import".into());
            }
            for d in &spec.decisions {
                d.decision()?;
            }
        }
        Ok(())
    }

    /// Sub-goal states checked against the environment, in plan order.
    pub fn resolve_sub_goals(&self, env: &EnvironmentSpec) -> Result<Vec<Vec<usize>>, RunError> {
        self.sub_goals
            .iter()
            .map(|g| {
                g.states
                    .iter()
                    .map(|id| {
                        let state = env.parse_state(id)?;
                        Ok(env.cell_of(&state)?)
                    })
                    .collect::<Result<Vec<_>, RunError>>()
            })
            .collect()
    }

    pub fn sub_goal_states(&self) -> Vec<Vec<EnvState>> {
        self.sub_goals
            .iter()
            .map(|g| g.states.iter().filter_map(|s| EnvState::parse(s)).collect())
            .collect()
    }
}

pub fn published_configs() -> Vec<&'static str> {
    PUBLISHED.iter().map(|(n, _)| *n).collect()
}

/// A config shipped with the crate: the exact settings of the baseline runs.
pub fn import_published(name: &str) -> Result<ExperimentConfig, RunError> {
    let (_, text) = PUBLISHED.iter().find(|(n, _)| *n == name).ok_or_else(|| {
        RunError::Config(format!(
            "no published config {name:?}; available: {}",
            published_configs().join(", ")
        ))
    })?;
    ExperimentConfig::from_toml(text)
}

/// Raw TOML of a published config, byte for byte.
pub fn published_text(name: &str) -> Option<&'static str> {
    PUBLISHED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
