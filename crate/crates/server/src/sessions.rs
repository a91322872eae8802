use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::Json;
use serde::{Deserialize, Serialize};

use langrid_core::encoders::{EncoderKind, EncoderSpec};
use langrid_core::env::EnvironmentSpec;
use langrid_core::instructions::{
    published_session, Decision, InstructionEngine, InstructionSession, PlanMode, SessionConfig, SessionFile,
};

use crate::apps::{environment, highlight_svg, store};
use crate::{blocking, parse, ApiError, AppState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionMode {
    /// One instruction per input line.
    #[default]
    Direct,
    /// The planner splits the input.
    Llm,
    /// A published session name or an inline session file.
    Import,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub application: String,
    #[serde(default)]
    pub sub_config: Option<String>,
    /// Store id from `GET /applications`.
    pub store: String,
    #[serde(default)]
    pub encoder: Option<EncoderSpec>,
    #[serde(default)]
    pub mode: SessionMode,
    #[serde(default)]
    pub input: Option<String>,
    /// Published session name (import mode).
    #[serde(default)]
    pub import: Option<String>,
    /// Inline session file (import mode).
    #[serde(default)]
    pub file: Option<SessionFile>,
    #[serde(default)]
    pub config: Option<SessionConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppendRequest {
    pub text: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfirmRequest {
    pub order: u32,
    /// `accept`, `reject` or `edit`.
    pub decision: String,
    /// Replacement text for `edit`.
    #[serde(default)]
    pub text: Option<String>,
}

impl ConfirmRequest {
    fn decision(&self) -> Result<Decision, ApiError> {
        match (self.decision.as_str(), &self.text) {
            ("accept", _) => Ok(Decision::Accept),
            ("reject", _) => Ok(Decision::Reject),
            ("edit", Some(t)) => Ok(Decision::Edit(t.clone())),
            ("edit", None) => Err(ApiError::bad_request("edit needs text")),
            (other, _) => Err(ApiError::bad_request(format!("unknown decision {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub store: String,
    pub all_confirmed: bool,
    pub session: InstructionSession,
    /// Per instruction: SVG with its proposed states outlined.
    pub previews: Vec<String>,
    /// Per instruction: adapter text of each proposed state.
    pub state_texts: Vec<Vec<String>>,
}

pub(crate) struct SessionEntry {
    id: String,
    store: String,
    env: Arc<EnvironmentSpec>,
    engine: InstructionEngine,
}

impl SessionEntry {
    pub(crate) fn engine(&self) -> &InstructionEngine {
        &self.engine
    }

    fn view(&self) -> SessionView {
        let session = self.engine.session().clone();
        let store = self.engine.matcher().store();
        SessionView {
            id: self.id.clone(),
            store: self.store.clone(),
            all_confirmed: session.all_confirmed(),
            previews: session.items.iter().map(|i| highlight_svg(&self.env, &i.states)).collect(),
            state_texts: session
                .items
                .iter()
                .map(|i| {
                    i.states
                        .iter()
                        .map(|s| store.get(&s.id).map(|r| r.text.clone()).unwrap_or_default())
                        .collect()
                })
                .collect(),
            session,
        }
    }
}

pub(crate) fn lookup(state: &AppState, id: &str) -> Result<Arc<Mutex<SessionEntry>>, ApiError> {
    state
        .inner
        .sessions
        .lock()
        .unwrap()
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError::not_found("session", id))
}

fn bow() -> EncoderSpec {
    EncoderSpec {
        id: EncoderKind::Bow,
        dim: 0,
        vocab: None,
        model: None,
    }
}

pub async fn create(State(state): State<AppState>, body: Bytes) -> Result<Json<SessionView>, ApiError> {
    let req: CreateSession = parse(&body)?;
    blocking(move || {
        let env = environment(&req.application, req.sub_config.as_deref())?;
        let encoder = req.encoder.clone().unwrap_or_else(bow);
        let corpus = store(&state, &env, &req.store, &encoder)?;
        let opts = state.options();
        let mut config = req.config.clone().unwrap_or_default();
        let engine = match req.mode {
            SessionMode::Direct | SessionMode::Llm => {
                config.plan = if req.mode == SessionMode::Llm { PlanMode::Llm } else { PlanMode::Direct };
                let input = req
                    .input
                    .as_deref()
                    .ok_or_else(|| ApiError::bad_request("input is required in direct and llm modes"))?;
                InstructionEngine::start(input, &corpus, opts.gateway.clone(), config, opts.embeddings.clone())?
            }
            SessionMode::Import => {
                let file = match (&req.import, req.file.clone()) {
                    (Some(name), None) => published_session(name)?,
                    (None, Some(f)) => f,
                    _ => return Err(ApiError::bad_request("import mode needs exactly one of import or file")),
                };
                InstructionEngine::import(&file, &corpus, opts.gateway.clone(), config, opts.embeddings.clone())?
            }
        };
        let entry = SessionEntry {
            id: state.fresh_id("session"),
            store: req.store.clone(),
            env,
            engine,
        };
        let view = entry.view();
        state
            .inner
            .sessions
            .lock()
            .unwrap()
            .insert(entry.id.clone(), Arc::new(Mutex::new(entry)));
        Ok(Json(view))
    })
    .await
}

pub async fn show(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let entry = lookup(&state, &id)?;
    let view = entry.lock().unwrap().view();
    Ok(Json(view))
}

pub async fn append(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionView>, ApiError> {
    let req: AppendRequest = parse(&body)?;
    let entry = lookup(&state, &id)?;
    blocking(move || {
        let mut e = entry.lock().unwrap();
        e.engine.append(&req.text)?;
        Ok(Json(e.view()))
    })
    .await
}

pub async fn confirm(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionView>, ApiError> {
    let req: ConfirmRequest = parse(&body)?;
    let decision = req.decision()?;
    let entry = lookup(&state, &id)?;
    blocking(move || {
        let mut e = entry.lock().unwrap();
        e.engine.confirm(req.order, decision)?;
        Ok(Json(e.view()))
    })
    .await
}
