//! HTTP front end for the experiment workbench.
//!
//! All bodies are JSON. Errors use `{"error": {"code", "message"}}`. Routes:
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/applications` | built-in problems, sub-configs, stores |
//! | GET | `/applications/{id}/preview` | SVG + text preview (`?sub_config=&state=`) |
//! | POST | `/sessions` | start or import an instruction session |
//! | GET | `/sessions/{id}` | current session view |
//! | POST | `/sessions/{id}/instructions` | append one instruction |
//! | POST | `/sessions/{id}/confirm` | accept, reject or edit an instruction |
//! | GET | `/configs/published` | bundled experiment configs |
//! | POST | `/runs` | launch a run |
//! | GET | `/runs` | all run handles |
//! | GET | `/runs/{id}` | poll a run |
//! | DELETE | `/runs/{id}` | cancel a run |
//! | GET | `/runs/{id}/results` | summary and figure data of a finished run |

mod apps;
mod error;
mod runs;
mod sessions;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;

use langrid_core::gateway::{EmbeddingBackend, Gateway};
use langrid_core::observations::ObservationStore;

pub use apps::{AppEntry, Preview, StoreEntry};
pub use error::ApiError;
pub use runs::{LaunchRequest, Overrides, RunHandle, RunResults, RunStatus};
pub use sessions::{ConfirmRequest, CreateSession, SessionView};

/// Address used when none is given.
pub const DEFAULT_BIND: &str = "127.0.0.1:5000";

#[derive(Clone, Default)]
pub struct ServerOptions {
    pub gateway: Option<Arc<Gateway>>,
    pub embeddings: Option<Arc<dyn EmbeddingBackend>>,
    /// LLM adapter caches.
    pub cache_dir: Option<PathBuf>,
    /// Each finished run writes its result files to `<dir>/<run id>/`.
    pub results_dir: Option<PathBuf>,
    /// Saved observation stores offered next to the built-in adapters.
    pub stores_dir: Option<PathBuf>,
}

type StoreKey = (String, String, String);

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    options: ServerOptions,
    next_id: AtomicU64,
    stores: Mutex<HashMap<StoreKey, Arc<ObservationStore>>>,
    sessions: Mutex<HashMap<String, Arc<Mutex<sessions::SessionEntry>>>>,
    runs: Mutex<HashMap<String, Arc<runs::RunEntry>>>,
}

impl AppState {
    pub fn new(options: ServerOptions) -> Self {
        Self {
            inner: Arc::new(Inner {
                options,
                next_id: AtomicU64::new(1),
                stores: Mutex::default(),
                sessions: Mutex::default(),
                runs: Mutex::default(),
            }),
        }
    }

    fn options(&self) -> &ServerOptions {
        &self.inner.options
    }

    fn fresh_id(&self, prefix: &str) -> String {
        format!("{prefix}-{}", self.inner.next_id.fetch_add(1, Ordering::Relaxed))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/applications", get(apps::list))
        .route("/applications/{id}/preview", get(apps::preview))
        .route("/sessions", post(sessions::create))
        .route("/sessions/{id}", get(sessions::show))
        .route("/sessions/{id}/instructions", post(sessions::append))
        .route("/sessions/{id}/confirm", post(sessions::confirm))
        .route("/configs/published", get(runs::published))
        .route("/runs", post(runs::launch).get(runs::list))
        .route("/runs/{id}", get(runs::poll).delete(runs::cancel))
        .route("/runs/{id}/results", get(runs::results))
        .with_state(state)
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("request body: {e}")))
}

/// Runs blocking engine or training work off the async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(axum::http::StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}
