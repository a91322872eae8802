use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::Json;
use serde::{Deserialize, Serialize};

use langrid_core::instructions::SessionFile;
use langrid_core::runner::{
    evaluate, import_published, published_configs, published_text, run_pipeline, write_results, AutoAccept,
    ExperimentConfig, FigureData, Progress, ProgressView, RunContext, RunError, Summary,
};

use crate::sessions::lookup;
use crate::{parse, ApiError, AppState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Pending,
    Running,
    Complete,
    Failed,
    Cancelled,
}

impl RunStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, RunStatus::Complete | RunStatus::Failed | RunStatus::Cancelled)
    }

    fn rank(self) -> u8 {
        match self {
            RunStatus::Pending => 0,
            RunStatus::Running => 1,
            _ => 2,
        }
    }
}

/// Replaces counts in a config. Changing a repeat count regenerates the
/// seed lists (`0..n`, `1000..1000+n`); changing `train_episodes` scales the
/// shaping budget with it.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub train_episodes: Option<u32>,
    pub train_repeats: Option<u32>,
    pub test_episodes: Option<u32>,
    pub test_repeats: Option<u32>,
    pub workers: Option<usize>,
}

impl Overrides {
    fn apply(&self, c: &mut ExperimentConfig) {
        if let Some(n) = self.train_episodes {
            let scaled = c.instruction_episode_budget as u64 * n as u64 / c.train_episodes.max(1) as u64;
            c.instruction_episode_budget = scaled as u32;
            c.train_episodes = n;
        }
        if let Some(n) = self.train_repeats {
            c.train_repeats = n;
            c.seeds = (0..n as u64).collect();
        }
        if let Some(n) = self.test_episodes {
            c.test_episodes = n;
        }
        if let Some(n) = self.test_repeats {
            c.test_repeats = n;
            c.test_seeds = (0..n as u64).map(|s| 1000 + s).collect();
        }
        if let Some(n) = self.workers {
            c.workers = n;
        }
    }
}

/// Exactly one of `config`, `config_toml` or `published`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaunchRequest {
    pub config: Option<ExperimentConfig>,
    pub config_toml: Option<String>,
    pub published: Option<String>,
    /// A fully confirmed session whose sub-goals shape the instructed arms.
    pub session: Option<String>,
    pub overrides: Option<Overrides>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHandle {
    pub id: String,
    pub name: String,
    pub status: RunStatus,
    pub progress: ProgressView,
    pub cancel_requested: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Link to the results once the run is complete.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub id: String,
    /// The config as trained, sub-goals included.
    pub config: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<SessionFile>,
    pub summary: Summary,
    pub figures: FigureData,
}

pub(crate) struct RunEntry {
    id: String,
    name: String,
    status: Mutex<RunStatus>,
    error: Mutex<Option<String>>,
    progress: Arc<Progress>,
    results: Mutex<Option<Arc<RunResults>>>,
}

impl RunEntry {
    /// Moves forward along pending → running → terminal; never back.
    fn advance(&self, next: RunStatus) -> bool {
        let mut s = self.status.lock().unwrap();
        if s.is_terminal() || next.rank() <= s.rank() {
            return false;
        }
        *s = next;
        true
    }

    fn handle(&self) -> RunHandle {
        let status = *self.status.lock().unwrap();
        RunHandle {
            id: self.id.clone(),
            name: self.name.clone(),
            status,
            progress: self.progress.view(),
            cancel_requested: self.progress.is_cancelled(),
            error: self.error.lock().unwrap().clone(),
            results: (status == RunStatus::Complete).then(|| format!("/runs/{}/results", self.id)),
        }
    }
}

#[derive(Serialize)]
pub struct PublishedEntry {
    name: &'static str,
    config: ExperimentConfig,
    toml: &'static str,
}

pub async fn published() -> Result<Json<Vec<PublishedEntry>>, ApiError> {
    published_configs()
        .into_iter()
        .map(|name| {
            Ok(PublishedEntry {
                name,
                config: import_published(name)?,
                toml: published_text(name).expect("listed config has text"),
            })
        })
        .collect::<Result<_, ApiError>>()
        .map(Json)
}

fn resolve(state: &AppState, req: &LaunchRequest) -> Result<ExperimentConfig, ApiError> {
    let mut config = match (&req.config, &req.config_toml, &req.published) {
        (Some(c), None, None) => c.clone(),
        (None, Some(t), None) => ExperimentConfig::from_toml(t)?,
        (None, None, Some(name)) => import_published(name)?,
        _ => return Err(ApiError::bad_request("give exactly one of config, config_toml or published")),
    };
    if let Some(o) = &req.overrides {
        o.apply(&mut config);
    }
    if let Some(id) = &req.session {
        let entry = lookup(state, id)?;
        let entry = entry.lock().unwrap();
        let session = entry.engine().session();
        if !session.all_confirmed() {
            return Err(ApiError::conflict("session_open", format!("session {id} has unconfirmed instructions")));
        }
        let key = format!("{}/{}", session.environment, session.sub_config);
        if key != config.environment.key() {
            return Err(ApiError::bad_request(format!(
                "session {id} is for {key}, the config for {}",
                config.environment.key()
            )));
        }
        config.instructions = None;
        config = config.with_sub_goals(&entry.engine().sub_goals());
    }
    config.validate()?;
    Ok(config)
}

pub async fn launch(State(state): State<AppState>, body: Bytes) -> Result<Json<RunHandle>, ApiError> {
    let req: LaunchRequest = parse(&body)?;
    let config = resolve(&state, &req)?;
    let entry = Arc::new(RunEntry {
        id: state.fresh_id("run"),
        name: config.name.clone(),
        status: Mutex::new(RunStatus::Pending),
        error: Mutex::default(),
        progress: Arc::default(),
        results: Mutex::default(),
    });
    state.inner.runs.lock().unwrap().insert(entry.id.clone(), entry.clone());
    let handle = entry.handle();
    let opts = state.options().clone();
    std::thread::spawn(move || {
        entry.advance(RunStatus::Running);
        let ctx = RunContext {
            gateway: opts.gateway.clone(),
            embeddings: opts.embeddings.clone(),
            cache_dir: opts.cache_dir.clone(),
            progress: entry.progress.clone(),
        };
        let outcome = run_pipeline(&config, &ctx, &mut AutoAccept).and_then(|out| {
            let (summary, figures) = match &opts.results_dir {
                Some(dir) => write_results(&dir.join(&entry.id), &out.run)?,
                None => evaluate(&out.run),
            };
            Ok(RunResults {
                id: entry.id.clone(),
                config: out.config,
                session: out.session,
                summary,
                figures,
            })
        });
        match outcome {
            Ok(results) => {
                *entry.results.lock().unwrap() = Some(Arc::new(results));
                entry.advance(RunStatus::Complete);
            }
            Err(RunError::Cancelled) => {
                entry.advance(RunStatus::Cancelled);
            }
            Err(e) => {
                log::warn!("{} failed: {e}", entry.id);
                *entry.error.lock().unwrap() = Some(e.to_string());
                entry.advance(RunStatus::Failed);
            }
        }
    });
    Ok(Json(handle))
}

fn run_entry(state: &AppState, id: &str) -> Result<Arc<RunEntry>, ApiError> {
    state
        .inner
        .runs
        .lock()
        .unwrap()
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError::not_found("run", id))
}

pub async fn list(State(state): State<AppState>) -> Json<Vec<RunHandle>> {
    let mut handles: Vec<RunHandle> = state.inner.runs.lock().unwrap().values().map(|e| e.handle()).collect();
    handles.sort_by_key(|h| h.id.trim_start_matches("run-").parse::<u64>().unwrap_or(u64::MAX));
    Json(handles)
}

pub async fn poll(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<RunHandle>, ApiError> {
    Ok(Json(run_entry(&state, &id)?.handle()))
}

/// Requests cancellation; a finished run is left as it is.
pub async fn cancel(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<RunHandle>, ApiError> {
    let entry = run_entry(&state, &id)?;
    if !entry.status.lock().unwrap().is_terminal() {
        entry.progress.cancel();
    }
    Ok(Json(entry.handle()))
}

pub async fn results(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<RunResults>, ApiError> {
    let entry = run_entry(&state, &id)?;
    let status = *entry.status.lock().unwrap();
    let results = entry.results.lock().unwrap().clone();
    match results {
        Some(r) if status == RunStatus::Complete => Ok(Json(r.as_ref().clone())),
        _ => Err(ApiError::conflict(
            "no_results",
            format!("run {id} is {}", serde_json::to_value(status).unwrap().as_str().unwrap()),
        )),
    }
}
