//! Adapters map an environment state to a language observation.
//!
//! Three kinds ship: [`NumericAdapter`] passes the state key through,
//! [`RuleAdapter`] fills fixed templates, [`LlmAdapter`] asks the gateway and
//! caches the first answer per state. Several states may share one text.
//!
//! Rule-style adapters for tabular records follow the same two steps: group
//! raw values into terms, then join the terms with connecting words.
//!
//! ```
//! use langrid_core::adapters::band;
//!
//! // gender=1, height=190cm, weight=70kg, build='slim'
//! let gender = if 1 == 1 { "male" } else { "female" };
//! let height = band(190.0, &[(160.0, "short"), (185.0, "average height")], "tall");
//! let weight = band(70.0, &[(55.0, "low weight"), (90.0, "normal weight")], "high weight");
//! let build = "slim build";
//! assert_eq!([gender, height, weight, build], ["male", "tall", "normal weight", "slim build"]);
//!
//! let text = format!("A {height} {gender} of {weight} and {build}");
//! assert_eq!(text, "A tall male of normal weight and slim build");
//! ```

mod cache;
mod llm;
mod rule;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoders::{Encoder, EncoderError};
use crate::env::{Direction, EnvState, EnvironmentSpec};
use crate::gateway::{Gateway, GatewayError};

pub use cache::{cache_digest, AdapterCache};
pub use llm::LlmAdapter;
pub use rule::RuleAdapter;

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("state {0}: {1}")]
    State(String, String),
    #[error("no description for state {state}: {source}")]
    Gateway {
        state: String,
        #[source]
        source: GatewayError,
    },
    #[error("the llm adapter needs an LLM gateway (set LANGRID_LLM_MODE)")]
    NoGateway,
    #[error("adapter cache: {0}")]
    Cache(String),
    #[error("encoding state {state}: {source}")]
    Encode {
        state: String,
        #[source]
        source: EncoderError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterKind {
    Numeric,
    Rule,
    Llm,
}

impl AdapterKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AdapterKind::Numeric => "numeric",
            AdapterKind::Rule => "rule",
            AdapterKind::Llm => "llm",
        }
    }
}

impl std::str::FromStr for AdapterKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "numeric" => Ok(Self::Numeric),
            "rule" => Ok(Self::Rule),
            "llm" => Ok(Self::Llm),
            other => Err(format!("unknown adapter {other:?} (numeric, rule, llm)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterSpec {
    pub kind: AdapterKind,
    /// Extra application context passed to the LLM prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_context: Option<String>,
}

impl AdapterSpec {
    pub fn new(kind: AdapterKind) -> Self {
        Self {
            kind,
            prompt_context: None,
        }
    }
}

/// A state's description plus its encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageObservation {
    pub text: String,
    pub vector: Vec<f64>,
    pub adapter_id: String,
    pub encoder_id: String,
}

pub trait Adapter: Send + Sync {
    fn id(&self) -> &str;

    fn kind(&self) -> AdapterKind;

    /// Text for `state`. Must be a function of the state: the same state
    /// always yields the same text.
    fn describe(
        &self,
        state: &EnvState,
        history: &[Direction],
        legal: &[Direction],
    ) -> Result<String, AdapterError>;

    fn observe(
        &self,
        encoder: &Encoder,
        state: &EnvState,
        history: &[Direction],
        legal: &[Direction],
    ) -> Result<LanguageObservation, AdapterError> {
        let text = self.describe(state, history, legal)?;
        let vector = encoder.encode(&text).map_err(|source| AdapterError::Encode {
            state: state.id.clone(),
            source,
        })?;
        Ok(LanguageObservation {
            text,
            vector,
            adapter_id: self.id().to_string(),
            encoder_id: encoder.spec().label(),
        })
    }
}

/// The state key itself, e.g. `"[3,1]"` or `"15"`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NumericAdapter;

impl Adapter for NumericAdapter {
    fn id(&self) -> &str {
        "numeric"
    }

    fn kind(&self) -> AdapterKind {
        AdapterKind::Numeric
    }

    fn describe(&self, state: &EnvState, _: &[Direction], _: &[Direction]) -> Result<String, AdapterError> {
        Ok(state.id.clone())
    }
}

/// Groups a value into a term: the label of the first band whose upper
/// bound exceeds `value`, else `top`.
pub fn band<'a>(value: f64, bands: &[(f64, &'a str)], top: &'a str) -> &'a str {
    bands
        .iter()
        .find(|(upper, _)| value < *upper)
        .map(|(_, label)| *label)
        .unwrap_or(top)
}

/// Builds an adapter for an environment. LLM adapters cache under
/// `cache_dir` when given, else in memory.
pub fn build(
    spec: &AdapterSpec,
    env: Arc<EnvironmentSpec>,
    gateway: Option<Arc<Gateway>>,
    cache_dir: Option<&Path>,
) -> Result<Arc<dyn Adapter>, AdapterError> {
    Ok(match spec.kind {
        AdapterKind::Numeric => Arc::new(NumericAdapter),
        AdapterKind::Rule => Arc::new(RuleAdapter::new(env)),
        AdapterKind::Llm => {
            let gateway = gateway.ok_or(AdapterError::NoGateway)?;
            let context = spec.prompt_context.clone().unwrap_or_default();
            let digest = cache_digest(&env.key(), "llm", &context);
            let cache = match cache_dir {
                Some(dir) => AdapterCache::open(
                    &dir.join(format!("{}_{}_llm.tsv", env.name, env.sub_config)),
                    &digest,
                )?,
                None => AdapterCache::in_memory(&digest),
            };
            Arc::new(LlmAdapter::new(env, gateway, context, Arc::new(cache)))
        }
    })
}
