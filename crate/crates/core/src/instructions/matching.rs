//! Similarity search over an observation store with additive penalties.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::encoders::{cosine, Encoder, EncoderKind, Vocabulary};
use crate::gateway::EmbeddingBackend;
use crate::observations::ObservationStore;

/// A store plus the one encoder used for the whole session.
///
/// For bag-of-words the vocabulary is built here from the corpus texts and
/// the session's instructions, and the corpus is re-encoded with it.
#[derive(Debug, Clone)]
pub struct Matcher {
    store: Arc<ObservationStore>,
    encoder: Encoder,
}

impl Matcher {
    pub fn new(
        store: &ObservationStore,
        instructions: &[&str],
        embeddings: Option<Arc<dyn EmbeddingBackend>>,
    ) -> Result<Self, SessionError> {
        if store.is_empty() {
            return Err(SessionError::EmptyStore);
        }
        let (store, encoder) = if store.header.encoder.id == EncoderKind::Bow {
            let vocab = Vocabulary::build(store.texts().chain(instructions.iter().copied()));
            let encoder = Encoder::bow(vocab);
            (store.reencode(&encoder)?, encoder)
        } else {
            (
                store.clone(),
                Encoder::from_spec(&store.header.encoder, embeddings)?,
            )
        };
        Ok(Self {
            store: Arc::new(store),
            encoder,
        })
    }

    pub fn store(&self) -> &ObservationStore {
        &self.store
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    /// Cosine between `text` and every record, in store order.
    pub fn cosines(&self, text: &str) -> Result<Vec<f64>, SessionError> {
        let q = self
            .encoder
            .encode(text)
            .map_err(|e| SessionError::Match(text.to_string(), e))?;
        self.store
            .records
            .iter()
            .map(|r| cosine(&q, &r.vector).map_err(|e| SessionError::Match(text.to_string(), e)))
            .collect()
    }

    pub fn start(&self, text: &str) -> Result<MatchState, SessionError> {
        Ok(MatchState::new(self.cosines(text)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Position in the store.
    pub index: usize,
    pub state_id: String,
    pub cosine: f64,
    pub penalty: f64,
    pub score: f64,
}

/// Per-instruction matching state. Adjusted score is `cosine - penalty`;
/// the best candidate is the highest score, earliest store position on ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchState {
    cosines: Vec<f64>,
    penalties: Vec<f64>,
    best: usize,
    /// Ranking (store positions) before each adjustment.
    pub history: Vec<Vec<usize>>,
}

impl MatchState {
    pub fn new(cosines: Vec<f64>) -> Self {
        assert!(!cosines.is_empty(), "match state over an empty store");
        let n = cosines.len();
        let mut s = Self {
            cosines,
            penalties: vec![0.0; n],
            best: 0,
            history: Vec::new(),
        };
        s.best = s.argmax();
        s
    }

    pub fn cosines(&self) -> &[f64] {
        &self.cosines
    }

    pub fn penalties(&self) -> &[f64] {
        &self.penalties
    }

    pub fn score(&self, i: usize) -> f64 {
        self.cosines[i] - self.penalties[i]
    }

    pub fn best(&self) -> usize {
        self.best
    }

    pub fn best_score(&self) -> f64 {
        self.score(self.best)
    }

    fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..self.cosines.len() {
            if self.score(i) > self.score(best) {
                best = i;
            }
        }
        best
    }

    /// Store positions by descending score; ties keep store order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.cosines.len()).collect();
        idx.sort_by(|&a, &b| self.score(b).total_cmp(&self.score(a)));
        idx
    }

    pub fn candidates(&self, store: &ObservationStore, limit: usize) -> Vec<Candidate> {
        self.ranking()
            .into_iter()
            .take(limit)
            .map(|i| Candidate {
                index: i,
                state_id: store.records[i].state.id.clone(),
                cosine: self.cosines[i],
                penalty: self.penalties[i],
                score: self.score(i),
            })
            .collect()
    }

    /// Penalises a rejected candidate by `delta` and recomputes the best.
    pub fn adjust(&mut self, rejected: usize, delta: f64) {
        debug_assert!(delta >= 0.0);
        self.history.push(self.ranking());
        self.penalties[rejected] += delta;
        self.best = self.argmax();
    }

    /// New similarities for a rewritten instruction; penalties carry over.
    pub fn replace_cosines(&mut self, cosines: Vec<f64>) {
        assert_eq!(cosines.len(), self.cosines.len());
        self.cosines = cosines;
        self.best = self.argmax();
    }

    /// Positions within `margin` of the best score, best first, at most `k`.
    pub fn near_best(&self, margin: f64, k: usize) -> Vec<usize> {
        let top = self.best_score();
        self.ranking()
            .into_iter()
            .take_while(|&i| top - self.score(i) <= margin)
            .take(k.max(1))
            .collect()
    }
}
