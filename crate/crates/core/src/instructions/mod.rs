//! Instruction grounding: plan sub-instructions, ground each one to
//! a state by similarity search, let a validator accept or trigger
//! adjustment plus reflection, then wait for a human to confirm.
//!
//! A confirmed [`SubGoal`] is a set of numeric states, so it can shape
//! training under any adapter.

mod matching;
mod session;

use thiserror::Error;

use crate::encoders::EncoderError;
use crate::gateway::GatewayError;
use crate::observations::StoreError;

pub use matching::{Candidate, MatchState, Matcher};
pub use session::{
    plan, published_session, published_sessions, Decision, FileInstruction, Instruction,
    InstructionEngine, InstructionSession, InstructionSource, ItemStatus, PlanMode, Reviewer, Round,
    SessionConfig, SessionFile, SessionItem, SubGoal, SESSION_VERSION,
};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("the plan is empty; enter at least one instruction")]
    EmptyPlan,
    #[error("the observation store is empty")]
    EmptyStore,
    #[error("cannot match {0:?}: {1}")]
    Match(String, #[source] EncoderError),
    #[error("planning failed: {0}")]
    Planning(#[source] GatewayError),
    #[error("LLM planning requested but no gateway is configured")]
    NoGateway,
    #[error("instruction {0} has used all {1} rounds")]
    RoundLimit(u32, u32),
    #[error("no instruction numbered {0}")]
    UnknownInstruction(u32),
    #[error("instruction {0} is already confirmed")]
    AlreadyConfirmed(u32),
    #[error("session file: {0}")]
    File(String),
    #[error("session is for {found}, store is for {expected}")]
    EnvironmentMismatch { expected: String, found: String },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Store(#[from] StoreError),
}
