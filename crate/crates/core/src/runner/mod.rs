//! Train/test protocol: repeated training with optional sub-goal shaping,
//! best-repeat selection, fixed-policy testing, statistics and result files.
//!
//! A run expands each configured agent x adapter pair into a plain arm and,
//! when sub-goals are present, an instructed arm. Every repeat is seeded from
//! the config, so identical configs give identical result files.

mod chart;
mod config;
mod evaluate;
mod persist;
mod pipeline;
mod protocol;

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::AdapterError;
use crate::agents::AgentError;
use crate::encoders::EncoderError;
use crate::env::EnvError;
use crate::instructions::SessionError;
use crate::observations::StoreError;

pub use chart::line_chart_svg;
pub use config::{
    import_published, published_configs, published_text, ArmSpec, EpsilonSchedule,
    ExperimentConfig, InstructionSpec, ScriptedDecision, ShapingGoal, CONFIG_VERSION,
};
pub use evaluate::{
    evaluate, rolling_mean, ArmSummary, Comparison, FigureData, Panel, Series, Stats, Summary,
    ROLLING_WINDOW,
};
pub use pipeline::{run_pipeline, AutoAccept, Confirmer, PipelineOutput};
pub use persist::{read_records, write_records, write_results, RESULT_FILES};
pub use protocol::{
    run, select_best, selection_score, test_policy, train_repeat, ArmResult, ObsTable, RunContext,
    RunOutput, TrainedRepeat,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("repeat {repeat}: {source}")]
    Agent {
        repeat: u32,
        #[source]
        source: AgentError,
    },
    #[error("arm {arm}: only {ok} of {total} repeats succeeded")]
    TooManyFailures { arm: String, ok: usize, total: usize },
    #[error("snapshot does not fit this arm: {0}")]
    Incompatible(String),
    #[error("run cancelled")]
    Cancelled,
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Test,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub repeat: u32,
    pub episode: u32,
    pub phase: Phase,
    /// Environment reward plus `shaping`.
    pub reward: f64,
    /// Sub-goal bonus included in `reward`; always 0 in testing.
    pub shaping: f64,
    pub steps: u32,
    pub goal_reached: bool,
    /// One flag per sub-goal; empty when the episode was not shaped.
    pub sub_goals_hit: Vec<bool>,
}

/// Shared progress counters and the cancel flag of one run.
#[derive(Debug, Default)]
pub struct Progress {
    episodes_done: AtomicU64,
    episodes_total: AtomicU64,
    arms_done: AtomicU64,
    cancel: AtomicBool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressView {
    pub episodes_done: u64,
    pub episodes_total: u64,
    pub arms_done: u64,
}

impl Progress {
    pub fn view(&self) -> ProgressView {
        ProgressView {
            episodes_done: self.episodes_done.load(Ordering::Relaxed),
            episodes_total: self.episodes_total.load(Ordering::Relaxed),
            arms_done: self.arms_done.load(Ordering::Relaxed),
        }
    }

    pub fn cancel(&self) {
        self.cancel.store(true, Ordering::Relaxed);
    }

    pub fn is_cancelled(&self) -> bool {
        self.cancel.load(Ordering::Relaxed)
    }

    fn set_total(&self, total: u64) {
        self.episodes_total.store(total, Ordering::Relaxed);
    }

    fn episode(&self) {
        self.episodes_done.fetch_add(1, Ordering::Relaxed);
    }

    fn arm(&self) {
        self.arms_done.fetch_add(1, Ordering::Relaxed);
    }
}

/// Seed for episode `episode` of a repeat seeded with `seed` (splitmix64).
pub fn episode_seed(seed: u64, episode: u32) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(episode as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
