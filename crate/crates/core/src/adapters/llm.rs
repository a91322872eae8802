use std::sync::{Arc, Mutex};

use super::{cache::AdapterCache, Adapter, AdapterError, AdapterKind, RuleAdapter};
use crate::env::{Direction, EnvState, EnvironmentSpec};
use crate::gateway::{Gateway, GatewayError};

/// Gateway-generated descriptions, frozen per state by an [`AdapterCache`].
///
/// A reply that fails format validation twice is replaced by the rule
/// adapter's text (cached like any other generation).
pub struct LlmAdapter {
    spec: Arc<EnvironmentSpec>,
    gateway: Arc<Gateway>,
    context: String,
    cache: Arc<AdapterCache>,
    fallback: RuleAdapter,
    generating: Mutex<()>,
}

impl std::fmt::Debug for LlmAdapter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmAdapter")
            .field("env", &self.spec.key())
            .field("cached", &self.cache.len())
            .finish()
    }
}

impl LlmAdapter {
    pub fn new(
        spec: Arc<EnvironmentSpec>,
        gateway: Arc<Gateway>,
        context: impl Into<String>,
        cache: Arc<AdapterCache>,
    ) -> Self {
        Self {
            fallback: RuleAdapter::new(spec.clone()),
            spec,
            gateway,
            context: context.into(),
            cache,
            generating: Mutex::new(()),
        }
    }

    pub fn cache(&self) -> &AdapterCache {
        &self.cache
    }
}

fn names(actions: &[Direction]) -> String {
    if actions.is_empty() {
        "none".into()
    } else {
        actions.iter().map(|d| d.name()).collect::<Vec<_>>().join(", ")
    }
}

impl Adapter for LlmAdapter {
    fn id(&self) -> &str {
        "llm"
    }

    fn kind(&self) -> AdapterKind {
        AdapterKind::Llm
    }

    fn describe(
        &self,
        state: &EnvState,
        history: &[Direction],
        legal: &[Direction],
    ) -> Result<String, AdapterError> {
        if let Some(text) = self.cache.get(&state.id) {
            return Ok(text);
        }
        self.spec
            .cell_of(state)
            .map_err(|e| AdapterError::State(state.id.clone(), e.to_string()))?;
        // one generation per state even under concurrent callers
        let _guard = self.generating.lock().unwrap();
        if let Some(text) = self.cache.get(&state.id) {
            return Ok(text);
        }
        let reply = self.gateway.describe(
            &self.spec.key(),
            &self.context,
            &state.id,
            &names(history),
            &names(legal),
        );
        let text = match reply {
            Ok(text) => text,
            Err(GatewayError::Format { raw, .. }) => {
                log::warn!(
                    "{}: LLM description for {} rejected twice ({raw:?}); using rule text",
                    self.spec.key(),
                    state.id
                );
                self.fallback.text(state)?
            }
            Err(source) => {
                return Err(AdapterError::Gateway {
                    state: state.id.clone(),
                    source,
                })
            }
        };
        self.cache.put(&state.id, &text)
    }
}
