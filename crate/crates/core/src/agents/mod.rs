//! Learning agents: a tabular Q-learner keyed by observation text and a
//! Deep-Q network over encoded observation vectors.

mod dqn;
mod mlp;
mod qtable;

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dqn::{DqnAgent, DqnConfig, ReplayBuffer};
pub use mlp::{Adam, Mlp};
pub use qtable::{QConfig, QTableAgent};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("non-finite {what} after {updates} updates")]
    NonFinite { what: &'static str, updates: u64 },
    #[error("observation has dim {got}, network expects {expected}")]
    Dim { expected: usize, got: usize },
    #[error("snapshot: {0}")]
    Snapshot(String),
}

/// What an agent sees: the adapter text (tabular key) and its encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obs {
    pub key: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Arc<Obs>,
    pub action: usize,
    pub reward: f64,
    pub next: Arc<Obs>,
    /// Goal, hazard or timeout: no bootstrapping from `next`.
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    #[serde(alias = "q", alias = "q-learning")]
    Qlearn,
    Dqn,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Qlearn => "qlearn",
            AgentKind::Dqn => "dqn",
        }
    }
}

impl std::str::FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "qlearn" | "q" | "q-learning" => Ok(Self::Qlearn),
            "dqn" => Ok(Self::Dqn),
            other => Err(format!("unknown agent {other:?} (qlearn, dqn)")),
        }
    }
}

pub trait Agent: Send {
    fn kind(&self) -> AgentKind;

    fn n_actions(&self) -> usize;

    /// Action values for `obs`.
    fn values(&self, obs: &Obs) -> Vec<f64>;

    /// Greedy action; ties go to the lowest action index.
    fn greedy(&self, obs: &Obs) -> usize {
        argmax(&self.values(obs))
    }

    /// Epsilon-greedy action.
    fn act(&self, obs: &Obs, epsilon: f64, rng: &mut ChaCha8Rng) -> usize {
        use rand::Rng;
        if rng.random::<f64>() < epsilon {
            rng.random_range(0..self.n_actions())
        } else {
            self.greedy(obs)
        }
    }

    fn learn(&mut self, t: Transition, rng: &mut ChaCha8Rng) -> Result<(), AgentError>;

    /// Complete learned state as JSON; equal snapshots mean equal agents.
    fn snapshot(&self) -> String;
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Linear decay from `start` to `end` over the first `fraction` of
/// `episodes`, then flat.
pub fn linear_epsilon(episode: u32, episodes: u32, start: f64, end: f64, fraction: f64) -> f64 {
    let horizon = (episodes as f64 * fraction).max(1.0);
    let t = (episode as f64 / horizon).min(1.0);
    start + (end - start) * t
}
