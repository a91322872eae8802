//! The observation store: every known state with its adapter text and
//! vector, collected before training and searched by instruction matching.
//!
//! Stores persist as JSON Lines: one header object, then one object per
//! record (see `docs/formats.md`).

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::Adapter;
use crate::encoders::{Encoder, EncoderError, EncoderKind, EncoderSpec, Vocabulary};
use crate::env::{Direction, EnvState, Environment, EnvironmentSpec, GridEnv};
use crate::gateway::EmbeddingBackend;

pub const STORE_FORMAT: &str = "langrid-observations";
pub const STORE_VERSION: u32 = 1;

/// Largest tolerated share of states that could not be described.
pub const MAX_SKIPPED_FRACTION: f64 = 0.2;

const HISTORY_LEN: usize = 4;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("explore mode needs a positive episode budget")]
    EmptyBudget,
    #[error("{skipped} of {total} states could not be described (limit 20%); first error: {first}")]
    TooManySkipped {
        skipped: usize,
        total: usize,
        first: String,
    },
    #[error("no states were collected")]
    Empty,
    #[error("store file version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("store was built with dim {found}, expected {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("store line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("duplicate state {0} in store")]
    Duplicate(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordSource {
    Enumerated,
    Explored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum CollectMode {
    Enumerate,
    Explore { episodes: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub state: EnvState,
    pub text: String,
    pub vector: Vec<f64>,
    pub source: RecordSource,
    pub visit_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreHeader {
    pub format: String,
    pub version: u32,
    pub environment: String,
    pub sub_config: String,
    pub adapter_id: String,
    pub encoder: EncoderSpec,
    pub dim: usize,
    pub records: usize,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    state: String,
    text: String,
    source: RecordSource,
    visit_count: u64,
    vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationStore {
    pub header: StoreHeader,
    pub records: Vec<ObservationRecord>,
}

struct Described {
    state: EnvState,
    flat: usize,
    text: String,
    source: RecordSource,
    visits: u64,
}

impl ObservationStore {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.header.dim
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.text.as_str())
    }

    pub fn get(&self, state_id: &str) -> Option<&ObservationRecord> {
        self.records.iter().find(|r| r.state.id == state_id)
    }

    pub fn position(&self, state_id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.state.id == state_id)
    }

    /// Same records with vectors recomputed by `encoder`.
    pub fn reencode(&self, encoder: &Encoder) -> Result<Self, StoreError> {
        let mut out = self.clone();
        for r in &mut out.records {
            r.vector = encoder.encode(&r.text)?;
        }
        out.header.encoder = encoder.spec();
        out.header.dim = encoder.dim();
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), StoreError> {
        let mut header = self.header.clone();
        header.records = self.records.len();
        serde_json::to_writer(&mut *w, &header).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            let line = RecordLine {
                state: r.state.id.clone(),
                text: r.text.clone(),
                source: r.source,
                visit_count: r.visit_count,
                vector: r.vector.clone(),
            };
            serde_json::to_writer(&mut *w, &line).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        Self::read_from(BufReader::new(std::fs::File::open(path)?))
    }

    /// Loads and checks the store was built with `encoder`'s dimension.
    pub fn load_for(path: &Path, encoder: &EncoderSpec) -> Result<Self, StoreError> {
        let store = Self::load(path)?;
        if encoder.id != EncoderKind::Bow && store.header.dim != encoder.dim {
            return Err(StoreError::DimMismatch {
                expected: encoder.dim,
                found: store.header.dim,
            });
        }
        Ok(store)
    }

    pub fn read_from(r: impl BufRead) -> Result<Self, StoreError> {
        let mut lines = r.lines();
        let bad = |line: usize, m: String| StoreError::Format { line, message: m };
        let first = lines.next().ok_or_else(|| bad(1, "empty file".into()))??;
        let probe: serde_json::Value =
            serde_json::from_str(&first).map_err(|e| bad(1, e.to_string()))?;
        if probe.get("format").and_then(|f| f.as_str()) != Some(STORE_FORMAT) {
            return Err(bad(1, "not an observation store".into()));
        }
        let found = probe.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != STORE_VERSION {
            return Err(StoreError::Version {
                found,
                expected: STORE_VERSION,
            });
        }
        let header: StoreHeader = serde_json::from_value(probe).map_err(|e| bad(1, e.to_string()))?;
        let mut records = Vec::with_capacity(header.records);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: RecordLine =
                serde_json::from_str(&line).map_err(|e| bad(i + 2, e.to_string()))?;
            let state = EnvState::parse(&rec.state)
                .ok_or_else(|| bad(i + 2, format!("bad state id {:?}", rec.state)))?;
            if rec.vector.len() != header.dim {
                return Err(StoreError::DimMismatch {
                    expected: header.dim,
                    found: rec.vector.len(),
                });
            }
            records.push(ObservationRecord {
                state,
                text: rec.text,
                vector: rec.vector,
                source: rec.source,
                visit_count: rec.visit_count,
            });
        }
        if records.len() != header.records {
            return Err(bad(
                records.len() + 2,
                format!("header announces {} records, found {}", header.records, records.len()),
            ));
        }
        Self::from_parts(header, records)
    }

    pub fn from_parts(header: StoreHeader, records: Vec<ObservationRecord>) -> Result<Self, StoreError> {
        let mut seen = std::collections::HashSet::new();
        for r in &records {
            if !seen.insert(&r.state.id) {
                return Err(StoreError::Duplicate(r.state.id.clone()));
            }
            if r.vector.len() != header.dim {
                return Err(StoreError::DimMismatch {
                    expected: header.dim,
                    found: r.vector.len(),
                });
            }
        }
        Ok(Self { header, records })
    }
}

/// Collects a store. A bow encoder without a vocabulary gets one built from
/// the collected texts.
pub fn collect(
    env: &Arc<EnvironmentSpec>,
    adapter: &dyn Adapter,
    encoder: &EncoderSpec,
    embeddings: Option<Arc<dyn EmbeddingBackend>>,
    mode: CollectMode,
    seed: u64,
) -> Result<ObservationStore, StoreError> {
    let mut skipped = Vec::new();
    let described = match mode {
        CollectMode::Enumerate => enumerate(env, adapter, &mut skipped),
        CollectMode::Explore { episodes: 0 } => return Err(StoreError::EmptyBudget),
        CollectMode::Explore { episodes } => explore(env, adapter, episodes, seed, &mut skipped),
    };
    let total = described.len() + skipped.len();
    if total == 0 {
        return Err(StoreError::Empty);
    }
    check_skipped(&skipped, total)?;

    let encoder = match encoder.id {
        EncoderKind::Bow if encoder.vocab.as_ref().is_none_or(|v| v.is_empty()) => {
            Encoder::bow(Vocabulary::build(described.iter().map(|d| d.text.as_str())))
        }
        _ => Encoder::from_spec(encoder, embeddings)?,
    };
    let mut records = Vec::with_capacity(described.len());
    for d in described {
        match encoder.encode(&d.text) {
            Ok(vector) => records.push(ObservationRecord {
                state: d.state,
                text: d.text,
                vector,
                source: d.source,
                visit_count: d.visits,
            }),
            Err(e @ EncoderError::Remote(_)) | Err(e @ EncoderError::RemoteDim { .. }) => {
                return Err(e.into())
            }
            Err(e) => {
                log::warn!("{}: skipping {}: {e}", env.key(), d.state.id);
                skipped.push(e.to_string());
            }
        }
    }
    check_skipped(&skipped, total)?;
    if records.is_empty() {
        return Err(StoreError::Empty);
    }
    let header = StoreHeader {
        format: STORE_FORMAT.into(),
        version: STORE_VERSION,
        environment: env.name.clone(),
        sub_config: env.sub_config.clone(),
        adapter_id: adapter.id().to_string(),
        encoder: encoder.spec(),
        dim: encoder.dim(),
        records: records.len(),
    };
    ObservationStore::from_parts(header, records)
}

fn check_skipped(skipped: &[String], total: usize) -> Result<(), StoreError> {
    if skipped.len() as f64 > MAX_SKIPPED_FRACTION * total as f64 {
        return Err(StoreError::TooManySkipped {
            skipped: skipped.len(),
            total,
            first: skipped[0].clone(),
        });
    }
    Ok(())
}

fn enumerate(
    env: &Arc<EnvironmentSpec>,
    adapter: &dyn Adapter,
    skipped: &mut Vec<String>,
) -> Vec<Described> {
    let mut out = Vec::new();
    for state in env.enumerate_states() {
        let legal = env.legal_actions(&state).unwrap_or_default();
        match adapter.describe(&state, &[], &legal) {
            Ok(text) => out.push(Described {
                flat: env.cell_of(&state).expect("enumerated state"),
                state,
                text,
                source: RecordSource::Enumerated,
                visits: 0,
            }),
            Err(e) => {
                log::warn!("{}: skipping {}: {e}", env.key(), state.id);
                skipped.push(e.to_string());
            }
        }
    }
    out
}

/// Uniform random walks; text is taken at the first visit of each state.
/// Records come back in row-major order.
fn explore(
    env: &Arc<EnvironmentSpec>,
    adapter: &dyn Adapter,
    episodes: u32,
    seed: u64,
    skipped: &mut Vec<String>,
) -> Vec<Described> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grid = GridEnv::new(env.clone());
    let mut found: HashMap<String, Described> = HashMap::new();
    let mut failed: HashMap<String, u64> = HashMap::new();
    let n_actions = env.action_set.len();

    let mut visit = |state: &EnvState, history: &[Direction], found: &mut HashMap<String, Described>| {
        if let Some(d) = found.get_mut(&state.id) {
            d.visits += 1;
            return;
        }
        if let Some(n) = failed.get_mut(&state.id) {
            *n += 1;
            return;
        }
        let legal = env.legal_actions(state).unwrap_or_default();
        let start = history.len().saturating_sub(HISTORY_LEN);
        match adapter.describe(state, &history[start..], &legal) {
            Ok(text) => {
                found.insert(
                    state.id.clone(),
                    Described {
                        flat: env.cell_of(state).expect("visited state"),
                        state: state.clone(),
                        text,
                        source: RecordSource::Explored,
                        visits: 1,
                    },
                );
            }
            Err(e) => {
                log::warn!("{}: skipping {}: {e}", env.key(), state.id);
                skipped.push(e.to_string());
                failed.insert(state.id.clone(), 1);
            }
        }
    };

    for _ in 0..episodes {
        let mut state = grid.reset(rng.random());
        let mut history = Vec::new();
        visit(&state, &history, &mut found);
        while !grid.is_done() {
            let a = rng.random_range(0..n_actions);
            let out = grid.step(a).expect("episode active");
            history.push(env.action_set[a]);
            state = out.next_state;
            visit(&state, &history, &mut found);
        }
    }
    let mut out: Vec<Described> = found.into_values().collect();
    out.sort_by_key(|d| d.flat);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::{NumericAdapter, RuleAdapter};
    use crate::encoders::DEFAULT_HASH_DIM;
    use crate::env::builtin;
    use std::collections::BTreeSet;

    fn spec(n: &str, s: &str) -> Arc<EnvironmentSpec> {
        Arc::new(builtin(n, s).unwrap())
    }

    fn rule_store(n: &str, s: &str, mode: CollectMode, seed: u64) -> ObservationStore {
        let env = spec(n, s);
        collect(&env, &RuleAdapter::new(env.clone()), &EncoderSpec::default(), None, mode, seed).unwrap()
    }

    #[test]
    fn enumerate_frozenlake_has_sixteen_records() {
        let store = rule_store("frozenlake", "4x4", CollectMode::Enumerate, 0);
        assert_eq!(store.len(), 16);
        assert!(store.records.iter().all(|r| r.vector.len() == store.dim()));
        assert_eq!(store.header.adapter_id, "rule");
        assert_eq!(store.header.encoder.label(), "hash-384");
    }

    #[test]
    fn explore_needs_budget() {
        let env = spec("maze", "umaze");
        let err = collect(
            &env,
            &NumericAdapter,
            &EncoderSpec::default(),
            None,
            CollectMode::Explore { episodes: 0 },
            1,
        )
        .unwrap_err();
        assert!(matches!(err, StoreError::EmptyBudget));
    }

    #[test]
    fn explore_umaze_covers_enumeration() {
        let env = spec("maze", "umaze");
        let all: BTreeSet<String> = env.enumerate_states().into_iter().map(|s| s.id).collect();
        let store = rule_store("maze", "umaze", CollectMode::Explore { episodes: 500 }, 1);
        let seen: BTreeSet<String> = store.records.iter().map(|r| r.state.id.clone()).collect();
        assert!(seen.is_subset(&all));
        assert!(seen.len() as f64 >= 0.95 * all.len() as f64);
        assert!(store.records.iter().all(|r| r.visit_count > 0));
    }

    #[test]
    fn enumerate_ignores_seed_and_explore_is_seeded() {
        let a = rule_store("maze", "double-t", CollectMode::Enumerate, 1);
        let b = rule_store("maze", "double-t", CollectMode::Enumerate, 99);
        assert_eq!(a, b);
        let e1 = rule_store("maze", "double-t", CollectMode::Explore { episodes: 20 }, 5);
        let e2 = rule_store("maze", "double-t", CollectMode::Explore { episodes: 20 }, 5);
        assert_eq!(e1, e2);
    }

    #[test]
    fn coverage_grows_with_budget_on_average() {
        let env = spec("maze", "double-t");
        let mean_cover = |budget| {
            (0..10)
                .map(|seed| {
                    collect(&env, &NumericAdapter, &EncoderSpec::hash(16), None,
                        CollectMode::Explore { episodes: budget }, seed)
                        .unwrap()
                        .len() as f64
                })
                .sum::<f64>()
                / 10.0
        };
        let covers: Vec<f64> = [1, 2, 5, 20, 100].into_iter().map(mean_cover).collect();
        assert!(covers.windows(2).all(|w| w[0] <= w[1]), "{covers:?}");
    }

    #[test]
    fn save_load_round_trip_is_lossless() {
        let store = rule_store("frozenlake", "4x4", CollectMode::Enumerate, 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lake.jsonl");
        store.save(&path).unwrap();
        let back = ObservationStore::load(&path).unwrap();
        assert_eq!(back, store);
        let raw = std::fs::read_to_string(&path).unwrap();
        assert_eq!(raw.lines().count(), 17);
        assert!(raw.starts_with("{\"format\":\"langrid-observations\",\"version\":1,"));
    }

    #[test]
    fn load_guards() {
        let store = rule_store("maze", "umaze", CollectMode::Enumerate, 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.jsonl");
        store.save(&path).unwrap();
        assert!(matches!(
            ObservationStore::load_for(&path, &EncoderSpec::hash(256)),
            Err(StoreError::DimMismatch { expected: 256, found: DEFAULT_HASH_DIM })
        ));
        let raw = std::fs::read_to_string(&path).unwrap().replacen("\"version\":1", "\"version\":7", 1);
        std::fs::write(&path, raw).unwrap();
        assert!(matches!(
            ObservationStore::load(&path),
            Err(StoreError::Version { found: 7, expected: 1 })
        ));
    }

    #[test]
    fn umaze_store_file_is_small() {
        let store = rule_store("maze", "umaze", CollectMode::Enumerate, 0);
        let mut buf = Vec::new();
        store.write_to(&mut buf).unwrap();
        // measured at 13.7 kB; pinned with 2x slack
        assert!(buf.len() < 28_000, "{} bytes", buf.len());
        assert!(buf.len() < 1_000_000);
    }

    #[test]
    fn bow_vocabulary_comes_from_the_corpus() {
        let env = spec("frozenlake", "4x4");
        let store = collect(&env, &RuleAdapter::new(env.clone()),
            &EncoderSpec { id: EncoderKind::Bow, dim: 0, vocab: None, model: None },
            None, CollectMode::Enumerate, 0).unwrap();
        let vocab = store.header.encoder.vocab.clone().unwrap();
        assert!(vocab.contains(&"present".to_string()));
        assert_eq!(store.dim(), vocab.len());
    }

    struct Flaky(usize);
    impl Adapter for Flaky {
        fn id(&self) -> &str {
            "flaky"
        }
        fn kind(&self) -> crate::adapters::AdapterKind {
            crate::adapters::AdapterKind::Llm
        }
        fn describe(&self, s: &EnvState, _: &[Direction], _: &[Direction]) -> Result<String, crate::adapters::AdapterError> {
            if s.index.unwrap() < self.0 {
                Err(crate::adapters::AdapterError::NoGateway)
            } else {
                Ok(format!("tile {}", s.id))
            }
        }
    }

    #[test]
    fn skipped_states_are_tallied() {
        let env = spec("frozenlake", "4x4");
        let ok = collect(&env, &Flaky(3), &EncoderSpec::hash(64), None, CollectMode::Enumerate, 0).unwrap();
        assert_eq!(ok.len(), 13);
        let err = collect(&env, &Flaky(4), &EncoderSpec::hash(64), None, CollectMode::Enumerate, 0).unwrap_err();
        assert!(matches!(err, StoreError::TooManySkipped { skipped: 4, total: 16, .. }));
    }
}
