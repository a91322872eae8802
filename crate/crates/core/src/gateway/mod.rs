//! The single egress point for language-model calls.
//!
//! [`Gateway`] renders a role template, sends it through a [`ChatBackend`]
//! and parses the reply for that role. Backends: [`OpenAiClient`] (live,
//! behind the `http` feature), [`RecordingBackend`], [`ReplayBackend`] and
//! [`StubBackend`]. Nothing else in the crate talks to a model.

mod parse;
mod templates;
mod transcript;

#[cfg(feature = "http")]
mod openai;

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{parse_plan, parse_rewrite, parse_sentence, parse_verdict, Verdict, MAX_PLAN_STEPS};
pub use templates::Template;
pub use transcript::{
    Exchange, RecordingBackend, ReplayBackend, StubBackend, Transcript, TRANSCRIPT_VERSION,
};

#[cfg(feature = "http")]
pub use openai::OpenAiClient;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("network error: {0}")]
    Network(String),
    #[error("request timed out")]
    Timeout,
    #[error("server answered with HTTP {status}")]
    Http { status: u16 },
    #[error("{role} response does not follow the required format: {raw:?}")]
    Format { role: &'static str, raw: String },
    #[error("template variable {0:?} was not provided")]
    MissingVariable(String),
    #[error("transcript exhausted after {0} exchanges")]
    TranscriptExhausted(usize),
    #[error("request {index} does not match the transcript")]
    TranscriptMismatch {
        index: usize,
        expected: Box<ChatRequest>,
        got: Box<ChatRequest>,
    },
    #[error("gateway configuration: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<String, GatewayError>;
}

pub trait EmbeddingBackend: Send + Sync {
    fn embed(&self, model: &str, inputs: &[String]) -> Result<Vec<Vec<f64>>, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Adapter,
    Planner,
    Validator,
    Reflector,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Adapter => "adapter",
            Role::Planner => "planner",
            Role::Validator => "validator",
            Role::Reflector => "reflector",
        }
    }

    fn format_reminder(self) -> &'static str {
        match self {
            Role::Adapter => "Reply with exactly one plain sentence on one line.",
            Role::Planner => "Reply only with a numbered list such as \"1. first step\", at most five lines.",
            Role::Validator => "Begin with \"Yes, the instruction is completed.\" or \"No, the instruction is not completed.\"",
            Role::Reflector => "Reply with the rewritten instruction only, on one line.",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub base_url: String,
    pub model: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub temperature: f64,
    pub seed: Option<u64>,
    pub max_in_flight: usize,
    /// Longest accepted adapter sentence, in characters.
    pub max_sentence_chars: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:11434".into(),
            model: "llama3.2".into(),
            timeout_secs: 60,
            max_retries: 2,
            temperature: 0.0,
            seed: Some(0),
            max_in_flight: 4,
            max_sentence_chars: 280,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Sentence(String),
    Plan(Vec<String>),
    Verdict(Verdict),
    Rewrite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayMode {
    Live,
    Record,
    Replay,
    Stub,
}

pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    config: GatewayConfig,
    requests: AtomicUsize,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("config", &self.config)
            .field("requests", &self.requests())
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, config: GatewayConfig) -> Self {
        Self {
            backend,
            config,
            requests: AtomicUsize::new(0),
        }
    }

    /// Gateway backed by a closure, with default config.
    pub fn stub(
        respond: impl Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync + 'static,
    ) -> Self {
        Self::new(Arc::new(StubBackend::new(respond)), GatewayConfig::default())
    }

    pub fn replay(transcript: Transcript, strict: bool) -> Self {
        Self::new(
            Arc::new(ReplayBackend::new(transcript, strict)),
            GatewayConfig::default(),
        )
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    /// Requests sent to the backend so far, retries included.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    /// Builds a gateway from `LANGRID_LLM_MODE` (`live`, `record`, `replay`,
    /// `stub`, unset = none), `LANGRID_LLM_BASE`, `LANGRID_LLM_MODEL` and
    /// `LANGRID_TRANSCRIPT`.
    pub fn from_env() -> Result<Option<Self>, GatewayError> {
        let Ok(mode) = std::env::var("LANGRID_LLM_MODE") else {
            return Ok(None);
        };
        let mode = match mode.to_ascii_lowercase().as_str() {
            "" | "off" | "none" => return Ok(None),
            "live" => GatewayMode::Live,
            "record" => GatewayMode::Record,
            "replay" => GatewayMode::Replay,
            "stub" => GatewayMode::Stub,
            other => {
                return Err(GatewayError::Config(format!(
                    "LANGRID_LLM_MODE={other} (expected live, record, replay or stub)"
                )))
            }
        };
        let mut config = GatewayConfig::default();
        if let Ok(base) = std::env::var("LANGRID_LLM_BASE") {
            config.base_url = base;
        }
        if let Ok(model) = std::env::var("LANGRID_LLM_MODEL") {
            config.model = model;
        }
        let transcript = std::env::var("LANGRID_TRANSCRIPT").ok().map(PathBuf::from);
        Self::with_mode(mode, config, transcript).map(Some)
    }

    pub fn with_mode(
        mode: GatewayMode,
        config: GatewayConfig,
        transcript: Option<PathBuf>,
    ) -> Result<Self, GatewayError> {
        let need_transcript = || {
            transcript
                .clone()
                .ok_or_else(|| GatewayError::Config(format!("{mode:?} mode needs a transcript file")))
        };
        let backend: Arc<dyn ChatBackend> = match mode {
            GatewayMode::Replay => Arc::new(ReplayBackend::new(
                Transcript::load(&need_transcript()?)?,
                true,
            )),
            GatewayMode::Stub => Arc::new(ReplayBackend::new(
                Transcript::load(&need_transcript()?)?,
                false,
            )),
            GatewayMode::Live | GatewayMode::Record => {
                let live = live_backend(&config)?;
                if mode == GatewayMode::Record {
                    Arc::new(RecordingBackend::new(live, Some(need_transcript()?)))
                } else {
                    live
                }
            }
        };
        Ok(Self::new(backend, config))
    }

    fn send(&self, role: Role, user: String) -> Result<String, GatewayError> {
        let template = Template::builtin(role);
        let request = ChatRequest {
            model: self.config.model.clone(),
            system: template.system,
            user,
            temperature: self.config.temperature,
            seed: self.config.seed,
        };
        self.requests.fetch_add(1, Ordering::SeqCst);
        self.backend.chat(&request)
    }

    /// Renders the role's template, sends it and parses the reply. A reply
    /// in the wrong format is retried once with a format reminder.
    pub fn complete(&self, role: Role, vars: &[(&str, &str)]) -> Result<Payload, GatewayError> {
        let user = Template::builtin(role).render(vars)?;
        let parse = |raw: &str| -> Option<Payload> {
            match role {
                Role::Adapter => {
                    parse_sentence(raw, self.config.max_sentence_chars).map(Payload::Sentence)
                }
                Role::Planner => parse_plan(raw).map(Payload::Plan),
                Role::Validator => parse_verdict(raw).map(Payload::Verdict),
                Role::Reflector => parse_rewrite(raw).map(Payload::Rewrite),
            }
        };
        let raw = self.send(role, user.clone())?;
        if let Some(p) = parse(&raw) {
            return Ok(p);
        }
        log::debug!("{} reply unparseable, retrying: {raw:?}", role.as_str());
        let retry = self.send(role, format!("{user}\n\n{}", role.format_reminder()))?;
        parse(&retry).ok_or(GatewayError::Format {
            role: role.as_str(),
            raw: retry,
        })
    }

    pub fn plan(&self, environment: &str, input: &str) -> Result<Vec<String>, GatewayError> {
        match self.complete(Role::Planner, &[("environment", environment), ("input", input)])? {
            Payload::Plan(steps) => Ok(steps),
            other => unreachable!("planner parsed as {other:?}"),
        }
    }

    pub fn validate(
        &self,
        environment: &str,
        instruction: &str,
        state: &str,
        description: &str,
    ) -> Result<Verdict, GatewayError> {
        match self.complete(
            Role::Validator,
            &[
                ("environment", environment),
                ("instruction", instruction),
                ("state", state),
                ("description", description),
            ],
        )? {
            Payload::Verdict(v) => Ok(v),
            other => unreachable!("validator parsed as {other:?}"),
        }
    }

    pub fn reflect(
        &self,
        environment: &str,
        instruction: &str,
        critique: &str,
        examples: &str,
    ) -> Result<String, GatewayError> {
        match self.complete(
            Role::Reflector,
            &[
                ("environment", environment),
                ("instruction", instruction),
                ("critique", critique),
                ("examples", examples),
            ],
        )? {
            Payload::Rewrite(s) => Ok(s),
            other => unreachable!("reflector parsed as {other:?}"),
        }
    }

    pub fn describe(
        &self,
        environment: &str,
        context: &str,
        state: &str,
        history: &str,
        legal: &str,
    ) -> Result<String, GatewayError> {
        match self.complete(
            Role::Adapter,
            &[
                ("environment", environment),
                ("context", context),
                ("state", state),
                ("history", history),
                ("legal", legal),
            ],
        )? {
            Payload::Sentence(s) => Ok(s),
            other => unreachable!("adapter parsed as {other:?}"),
        }
    }
}

#[cfg(feature = "http")]
fn live_backend(config: &GatewayConfig) -> Result<Arc<dyn ChatBackend>, GatewayError> {
    Ok(Arc::new(OpenAiClient::new(
        &config.base_url,
        Duration::from_secs(config.timeout_secs),
        config.max_retries,
        config.max_in_flight,
    )))
}

#[cfg(not(feature = "http"))]
fn live_backend(_config: &GatewayConfig) -> Result<Arc<dyn ChatBackend>, GatewayError> {
    let _ = Duration::ZERO;
    Err(GatewayError::Config(
        "built without the `http` feature; live mode is unavailable".into(),
    ))
}

/// Embedding client for the `remote-embed` encoder.
#[cfg(feature = "http")]
pub fn embedding_backend(config: &GatewayConfig) -> Arc<dyn EmbeddingBackend> {
    Arc::new(OpenAiClient::new(
        &config.base_url,
        Duration::from_secs(config.timeout_secs),
        config.max_retries,
        config.max_in_flight,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planner_stub_table_plan() {
        let gw = Gateway::stub(|_| {
            Ok("1. Move north from the starting position until reaching the present\n\
                2. Verify the present has been successfully accessed by stepping on it"
                .into())
        });
        let plan = gw.plan("frozenlake", "Help the elf reach the present").unwrap();
        assert_eq!(plan.len(), 2);
        assert_eq!(gw.requests(), 1);
    }

    #[test]
    fn validator_canonical_accept() {
        let gw = Gateway::stub(|_| Ok("Yes, the instruction is completed.".into()));
        assert!(gw.validate("maze", "reach the goal", "[3,3]", "At the goal.").unwrap().accept);
    }

    #[test]
    fn malformed_reply_retried_once_then_format_error() {
        let backend = Arc::new(StubBackend::fixed("I cannot help with that"));
        let gw = Gateway::new(backend.clone(), GatewayConfig::default());
        let err = gw.plan("maze", "go").unwrap_err();
        assert!(matches!(err, GatewayError::Format { role: "planner", .. }));
        assert_eq!(backend.calls(), 2);
    }

    #[test]
    fn retry_carries_format_reminder() {
        let gw = Gateway::stub(|req| {
            if req.user.contains("numbered list") {
                Ok("1. go left".into())
            } else {
                Ok("go left".into())
            }
        });
        assert_eq!(gw.plan("maze", "go").unwrap(), vec!["go left"]);
        assert_eq!(gw.requests(), 2);
    }

    #[test]
    fn system_prompt_and_determinism_fields() {
        let seen = Arc::new(std::sync::Mutex::new(Vec::new()));
        let sink = seen.clone();
        let gw = Gateway::stub(move |req| {
            sink.lock().unwrap().push(req.clone());
            Ok("The agent stands in a corridor.".into())
        });
        gw.describe("maze", "", "[1,1]", "up", "down, right").unwrap();
        let req = &seen.lock().unwrap()[0];
        assert!(req.system.contains("No lists, no coordinates unless given."));
        assert_eq!(req.temperature, 0.0);
        assert_eq!(req.seed, Some(0));
        assert!(req.user.contains("Legal actions: down, right"));
    }

    #[test]
    fn modes_need_transcripts() {
        assert!(Gateway::with_mode(GatewayMode::Replay, GatewayConfig::default(), None).is_err());
        assert!(Gateway::with_mode(GatewayMode::Stub, GatewayConfig::default(), None).is_err());
    }
}
