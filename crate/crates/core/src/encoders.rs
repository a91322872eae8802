//! Text encoders and cosine similarity.
//!
//! Instruction text and adapter text must be encoded the same way before they
//! can be compared, so one [`Encoder`] is fixed per store/session. All text
//! goes through [`normalize`]: lowercase, delete punctuation, split on
//! whitespace.

use std::collections::HashMap;
use std::hash::Hasher;
use std::sync::Arc;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::EmbeddingBackend;

/// Width of the default hash encoder; matches common sentence-embedding models.
pub const DEFAULT_HASH_DIM: usize = 384;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("text {0:?} has no tokens after normalization")]
    EmptyText(String),
    #[error("text {0:?} encodes to an all-zero vector")]
    Degenerate(String),
    #[error("vector dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("cosine is undefined for a zero vector")]
    ZeroVector,
    #[error("encoder dimension must be positive")]
    ZeroDim,
    #[error("embedding service: {0}")]
    Remote(String),
    #[error("embedding service returned {got} values, expected {expected}")]
    RemoteDim { expected: usize, got: usize },
}

/// Lowercases, deletes punctuation and splits on whitespace.
///
/// Deleting (rather than spacing out) punctuation keeps coordinate keys such
/// as `[3,1]` as one token (`31`).
pub fn normalize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| !c.is_ascii_punctuation() && !is_unicode_punct(*c))
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

fn is_unicode_punct(c: char) -> bool {
    matches!(
        c,
        '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{2013}' | '\u{2014}' | '\u{2026}'
    )
}

/// Token → column table for bag-of-words, in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut vocab = Self::default();
        for text in texts {
            for tok in normalize(text) {
                vocab.insert(tok);
            }
        }
        vocab
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let mut vocab = Self::default();
        for tok in tokens {
            vocab.insert(tok);
        }
        vocab
    }

    fn insert(&mut self, tok: String) {
        if !self.index.contains_key(&tok) {
            self.index.insert(tok.clone(), self.tokens.len());
            self.tokens.push(tok);
        }
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    Bow,
    Hash,
    RemoteEmbed,
}

impl EncoderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::Bow => "bow",
            EncoderKind::Hash => "hash",
            EncoderKind::RemoteEmbed => "remote-embed",
        }
    }
}

/// Serializable description of an encoder, enough to rebuild it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    pub id: EncoderKind,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

impl EncoderSpec {
    pub fn hash(dim: usize) -> Self {
        Self {
            id: EncoderKind::Hash,
            dim,
            vocab: None,
            model: None,
        }
    }

    /// Short label such as `hash-384`, used in file names and headers.
    pub fn label(&self) -> String {
        match self.id {
            EncoderKind::Bow => "bow".into(),
            kind => format!("{}-{}", kind.as_str(), self.dim),
        }
    }
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self::hash(DEFAULT_HASH_DIM)
    }
}

#[derive(Clone)]
enum Method {
    Bow(Vocabulary),
    Hash(usize),
    Remote {
        dim: usize,
        model: String,
        backend: Arc<dyn EmbeddingBackend>,
    },
}

/// An immutable encoder; `encode` and [`cosine`] are pure.
#[derive(Clone)]
pub struct Encoder {
    method: Method,
}

impl std::fmt::Debug for Encoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Encoder").field("spec", &self.spec()).finish()
    }
}

impl Encoder {
    pub fn bow(vocab: Vocabulary) -> Self {
        Self {
            method: Method::Bow(vocab),
        }
    }

    pub fn hash(dim: usize) -> Result<Self, EncoderError> {
        if dim == 0 {
            return Err(EncoderError::ZeroDim);
        }
        Ok(Self {
            method: Method::Hash(dim),
        })
    }

    pub fn remote(
        dim: usize,
        model: impl Into<String>,
        backend: Arc<dyn EmbeddingBackend>,
    ) -> Result<Self, EncoderError> {
        if dim == 0 {
            return Err(EncoderError::ZeroDim);
        }
        Ok(Self {
            method: Method::Remote {
                dim,
                model: model.into(),
                backend,
            },
        })
    }

    /// Rebuilds an encoder from its description. Remote encoders need a
    /// backend.
    pub fn from_spec(
        spec: &EncoderSpec,
        backend: Option<Arc<dyn EmbeddingBackend>>,
    ) -> Result<Self, EncoderError> {
        match spec.id {
            EncoderKind::Bow => Ok(Self::bow(Vocabulary::from_tokens(
                spec.vocab.clone().unwrap_or_default(),
            ))),
            EncoderKind::Hash => Self::hash(spec.dim),
            EncoderKind::RemoteEmbed => {
                let backend = backend.ok_or_else(|| {
                    EncoderError::Remote("no embedding backend configured".into())
                })?;
                Self::remote(
                    spec.dim,
                    spec.model.clone().unwrap_or_default(),
                    backend,
                )
            }
        }
    }

    pub fn spec(&self) -> EncoderSpec {
        match &self.method {
            Method::Bow(v) => EncoderSpec {
                id: EncoderKind::Bow,
                dim: v.len(),
                vocab: Some(v.tokens().to_vec()),
                model: None,
            },
            Method::Hash(dim) => EncoderSpec::hash(*dim),
            Method::Remote { dim, model, .. } => EncoderSpec {
                id: EncoderKind::RemoteEmbed,
                dim: *dim,
                vocab: None,
                model: Some(model.clone()),
            },
        }
    }

    pub fn kind(&self) -> EncoderKind {
        match self.method {
            Method::Bow(_) => EncoderKind::Bow,
            Method::Hash(_) => EncoderKind::Hash,
            Method::Remote { .. } => EncoderKind::RemoteEmbed,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.method {
            Method::Bow(v) => v.len(),
            Method::Hash(d) => *d,
            Method::Remote { dim, .. } => *dim,
        }
    }

    pub fn encode(&self, text: &str) -> Result<Vec<f64>, EncoderError> {
        let tokens = normalize(text);
        if tokens.is_empty() {
            return Err(EncoderError::EmptyText(text.to_string()));
        }
        let v = match &self.method {
            Method::Bow(vocab) => {
                let mut v = vec![0.0; vocab.len()];
                for t in &tokens {
                    if let Some(i) = vocab.get(t) {
                        v[i] += 1.0;
                    }
                }
                v
            }
            Method::Hash(dim) => {
                let mut v = vec![0.0; *dim];
                for t in &tokens {
                    let (bucket, sign) = hash_token(t, *dim);
                    v[bucket] += sign;
                }
                v
            }
            Method::Remote {
                dim,
                model,
                backend,
            } => {
                let mut out = backend
                    .embed(model, &[tokens.join(" ")])
                    .map_err(|e| EncoderError::Remote(e.to_string()))?;
                let v = out.pop().ok_or_else(|| EncoderError::Remote("empty response".into()))?;
                if v.len() != *dim {
                    return Err(EncoderError::RemoteDim {
                        expected: *dim,
                        got: v.len(),
                    });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(EncoderError::Remote("non-finite embedding".into()));
                }
                v
            }
        };
        if v.iter().all(|&x| x == 0.0) {
            return Err(EncoderError::Degenerate(text.to_string()));
        }
        Ok(v)
    }
}

/// Bucket and sign for signed feature hashing (FNV-1a over the token bytes).
pub fn hash_token(token: &str, dim: usize) -> (usize, f64) {
    let mut h = FnvHasher::default();
    h.write(token.as_bytes());
    let h = h.finish();
    let bucket = (h % dim as u64) as usize;
    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
    (bucket, sign)
}

/// `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, EncoderError> {
    if a.len() != b.len() {
        return Err(EncoderError::DimMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(EncoderError::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization_pipeline() {
        assert_eq!(
            normalize("A wall is on your LEFT, ... [3,1]!"),
            vec!["a", "wall", "is", "on", "your", "left", "31"]
        );
        assert!(normalize(" ?! ").is_empty());
    }

    #[test]
    fn bow_counts_terms() {
        let enc = Encoder::bow(Vocabulary::from_tokens(vec!["wall".into(), "left".into()]));
        assert_eq!(enc.encode("wall left wall").unwrap(), vec![2.0, 1.0]);
        // out-of-vocabulary tokens are dropped
        assert_eq!(enc.encode("wall door").unwrap(), vec![1.0, 0.0]);
        assert!(matches!(
            enc.encode("door"),
            Err(EncoderError::Degenerate(_))
        ));
        assert!(matches!(enc.encode("..."), Err(EncoderError::EmptyText(_))));
    }

    #[test]
    fn vocabulary_first_seen_order() {
        let v = Vocabulary::build(["b a", "c a b"]);
        assert_eq!(v.tokens(), &["b", "a", "c"]);
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[2.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        // (1,2,3)·(4,-5,6) = 12, |a| = sqrt(14), |b| = sqrt(77)
        // 12 / sqrt(1078) = 0.365 486 942 ...
        let hand = 12.0 / 1078f64.sqrt();
        let got = cosine(&[1.0, 2.0, 3.0], &[4.0, -5.0, 6.0]).unwrap();
        assert!((got - hand).abs() < 1e-12);
        assert!((got - 0.365_486_942_323_903_6).abs() < 1e-12);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine(&[1.0], &[1.0, 2.0]),
            Err(EncoderError::DimMismatch(1, 2))
        ));
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 2.0]),
            Err(EncoderError::ZeroVector)
        ));
    }

    #[test]
    fn spec_round_trip() {
        let enc = Encoder::bow(Vocabulary::build(["the goal is near"]));
        let rebuilt = Encoder::from_spec(&enc.spec(), None).unwrap();
        assert_eq!(
            rebuilt.encode("goal near").unwrap(),
            enc.encode("goal near").unwrap()
        );
        assert_eq!(Encoder::hash(8).unwrap().spec().label(), "hash-8");
        assert!(Encoder::hash(0).is_err());
        assert!(Encoder::from_spec(
            &EncoderSpec {
                id: EncoderKind::RemoteEmbed,
                dim: 4,
                vocab: None,
                model: None
            },
            None
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn cosine_scale_invariant(
            a in prop::collection::vec(-10.0f64..10.0, 6),
            b in prop::collection::vec(-10.0f64..10.0, 6),
            alpha in 0.01f64..100.0,
        ) {
            prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
            let scaled: Vec<f64> = a.iter().map(|x| x * alpha).collect();
            let c1 = cosine(&a, &b).unwrap();
            let c2 = cosine(&scaled, &b).unwrap();
            prop_assert!((c1 - c2).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&c1));
        }

        #[test]
        fn self_similarity_is_one(words in prop::collection::vec("[a-z]{1,8}", 1..12)) {
            let text = words.join(" ");
            let enc = Encoder::hash(DEFAULT_HASH_DIM).unwrap();
            match enc.encode(&text) {
                Ok(v) => {
                    prop_assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
                    // deterministic within a session
                    prop_assert_eq!(enc.encode(&text).unwrap(), v);
                }
                // opposite-signed collisions can cancel to zero
                Err(EncoderError::Degenerate(_)) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
