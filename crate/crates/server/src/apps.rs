use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::Json;
use serde::{Deserialize, Serialize};

use langrid_core::adapters::{self, AdapterKind, AdapterSpec};
use langrid_core::encoders::EncoderSpec;
use langrid_core::env::{applications, builtin, render_svg, render_text, CellHighlight, EnvState, EnvironmentSpec};
use langrid_core::observations::{collect, CollectMode, ObservationStore};

use crate::{ApiError, AppState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreEntry {
    /// Adapter kind for on-demand stores, `file:<name>` for saved ones.
    pub id: String,
    pub adapter: String,
    pub environment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub records: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppEntry {
    pub id: String,
    pub title: String,
    pub description: String,
    pub sub_configs: Vec<String>,
    pub stores: Vec<StoreEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preview {
    pub id: String,
    pub sub_config: String,
    pub actions: Vec<String>,
    pub start: EnvState,
    pub goals: Vec<EnvState>,
    pub states: usize,
    pub episode_cap: u32,
    pub stochastic: bool,
    pub text: String,
    pub svg: String,
}

#[derive(Debug, Deserialize)]
pub struct PreviewQuery {
    sub_config: Option<String>,
    /// Draw the agent here instead of at the start.
    state: Option<String>,
}

pub(crate) fn environment(id: &str, sub_config: Option<&str>) -> Result<Arc<EnvironmentSpec>, ApiError> {
    let app = applications()
        .into_iter()
        .find(|a| a.id == id)
        .ok_or_else(|| ApiError::not_found("application", id))?;
    let sub = sub_config.unwrap_or(app.sub_configs[0]);
    builtin(id, sub)
        .map(Arc::new)
        .map_err(|e| ApiError::not_found("sub-config", &format!("{id}/{sub}: {e}")))
}

fn builtin_kinds(state: &AppState) -> Vec<AdapterKind> {
    let mut kinds = vec![AdapterKind::Numeric, AdapterKind::Rule];
    if state.options().gateway.is_some() {
        kinds.push(AdapterKind::Llm);
    }
    kinds
}

fn saved_stores(state: &AppState) -> Vec<(String, PathBuf, ObservationStore)> {
    let Some(dir) = &state.options().stores_dir else {
        return Vec::new();
    };
    let Ok(entries) = std::fs::read_dir(dir) else {
        return Vec::new();
    };
    let mut out: Vec<_> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .filter_map(|p| {
            let name = p.file_stem()?.to_str()?.to_string();
            match ObservationStore::load(&p) {
                Ok(store) => Some((name, p, store)),
                Err(e) => {
                    log::warn!("skipping {}: {e}", p.display());
                    None
                }
            }
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

pub async fn list(State(state): State<AppState>) -> Json<Vec<AppEntry>> {
    let saved = saved_stores(&state);
    let kinds = builtin_kinds(&state);
    let entries = applications()
        .into_iter()
        .map(|app| {
            let mut stores = Vec::new();
            for sub in &app.sub_configs {
                let environment = format!("{}/{sub}", app.id);
                stores.extend(kinds.iter().map(|k| StoreEntry {
                    id: k.as_str().into(),
                    adapter: k.as_str().into(),
                    environment: environment.clone(),
                    records: None,
                }));
                stores.extend(
                    saved
                        .iter()
                        .filter(|(_, _, s)| s.header.environment == app.id && s.header.sub_config == *sub)
                        .map(|(name, _, s)| StoreEntry {
                            id: format!("file:{name}"),
                            adapter: s.header.adapter_id.clone(),
                            environment: environment.clone(),
                            records: Some(s.len()),
                        }),
                );
            }
            AppEntry {
                id: app.id.into(),
                title: app.title.into(),
                description: app.description.into(),
                sub_configs: app.sub_configs.iter().map(|s| s.to_string()).collect(),
                stores,
            }
        })
        .collect();
    Json(entries)
}

pub async fn preview(
    State(_): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<PreviewQuery>,
) -> Result<Json<Preview>, ApiError> {
    let env = environment(&id, q.sub_config.as_deref())?;
    let agent = match &q.state {
        Some(s) => env.parse_state(s).map_err(|e| ApiError::bad_request(e.to_string()))?,
        None => env.start.clone(),
    };
    Ok(Json(Preview {
        id,
        sub_config: env.sub_config.clone(),
        actions: env.action_set.iter().map(|d| d.name().to_string()).collect(),
        start: env.start.clone(),
        goals: env.goals.clone(),
        states: env.enumerate_states().len(),
        episode_cap: env.episode_cap,
        stochastic: env.stochastic,
        text: render_text(&env, Some(&agent)),
        svg: render_svg(&env, Some(&agent), &[]),
    }))
}

/// SVG of `env` with `states` outlined, best first.
pub(crate) fn highlight_svg(env: &EnvironmentSpec, states: &[EnvState]) -> String {
    let marks: Vec<CellHighlight> = states
        .iter()
        .enumerate()
        .map(|(i, s)| CellHighlight {
            state: s.clone(),
            label: format!("{}", i + 1),
            color: if i == 0 { "#d9480f".into() } else { "#f59f00".into() },
        })
        .collect();
    render_svg(env, None, &marks)
}

/// An on-demand store (built once per environment, adapter and encoder) or
/// a saved one.
pub(crate) fn store(
    state: &AppState,
    env: &Arc<EnvironmentSpec>,
    id: &str,
    encoder: &EncoderSpec,
) -> Result<Arc<ObservationStore>, ApiError> {
    if let Some(name) = id.strip_prefix("file:") {
        let (_, _, store) = saved_stores(state)
            .into_iter()
            .find(|(n, _, _)| n == name)
            .ok_or_else(|| ApiError::not_found("store", id))?;
        if store.header.environment != env.name || store.header.sub_config != env.sub_config {
            return Err(ApiError::bad_request(format!(
                "store {id} was collected on {}/{}",
                store.header.environment, store.header.sub_config
            )));
        }
        return Ok(Arc::new(store));
    }
    let kind = builtin_kinds(state)
        .into_iter()
        .find(|k| k.as_str() == id)
        .ok_or_else(|| ApiError::not_found("store", id))?;
    let key = (env.key(), id.to_string(), serde_json::to_string(encoder).expect("spec serializes"));
    if let Some(s) = state.inner.stores.lock().unwrap().get(&key) {
        return Ok(s.clone());
    }
    let opts = state.options();
    let adapter = adapters::build(&AdapterSpec::new(kind), env.clone(), opts.gateway.clone(), opts.cache_dir.as_deref())
        .map_err(|e| ApiError::new(axum::http::StatusCode::BAD_GATEWAY, "adapter", e.to_string()))?;
    let collected = collect(env, adapter.as_ref(), encoder, opts.embeddings.clone(), CollectMode::Enumerate, 0)
        .map_err(|e| ApiError::new(axum::http::StatusCode::UNPROCESSABLE_ENTITY, "store", e.to_string()))?;
    let collected = Arc::new(collected);
    state.inner.stores.lock().unwrap().insert(key, collected.clone());
    Ok(collected)
}
