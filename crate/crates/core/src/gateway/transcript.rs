//! Recorded request/response pairs and the offline backends built on them.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatBackend, ChatRequest, GatewayError};

pub const TRANSCRIPT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub request: ChatRequest,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub version: u32,
    /// Experiment config the exchanges were recorded under, as TOML.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
    pub entries: Vec<Exchange>,
}

impl Default for Transcript {
    fn default() -> Self {
        Self {
            version: TRANSCRIPT_VERSION,
            config: None,
            entries: Vec::new(),
        }
    }
}

impl Transcript {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, GatewayError> {
        let t: Transcript = serde_json::from_str(text)
            .map_err(|e| GatewayError::Config(format!("bad transcript: {e}")))?;
        if t.version != TRANSCRIPT_VERSION {
            return Err(GatewayError::Config(format!(
                "transcript version {} is not supported (expected {TRANSCRIPT_VERSION})",
                t.version
            )));
        }
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("transcript serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), GatewayError> {
        std::fs::write(path, self.to_json())
            .map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

/// Wraps a live backend and keeps every exchange; optionally rewrites a
/// transcript file after each call.
pub struct RecordingBackend {
    inner: Arc<dyn ChatBackend>,
    transcript: Mutex<Transcript>,
    path: Option<PathBuf>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn ChatBackend>, path: Option<PathBuf>) -> Self {
        Self {
            inner,
            transcript: Mutex::new(Transcript::default()),
            path,
        }
    }

    pub fn transcript(&self) -> Transcript {
        self.transcript.lock().unwrap().clone()
    }
}

impl ChatBackend for RecordingBackend {
    fn chat(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let response = self.inner.chat(request)?;
        let mut t = self.transcript.lock().unwrap();
        t.entries.push(Exchange {
            request: request.clone(),
            response: response.clone(),
        });
        if let Some(path) = &self.path {
            t.save(path)?;
        }
        Ok(response)
    }
}

/// Serves recorded responses in order with no network use.
///
/// In strict mode every request must equal the recorded one.
pub struct ReplayBackend {
    transcript: Transcript,
    cursor: Mutex<usize>,
    strict: bool,
}

impl ReplayBackend {
    pub fn new(transcript: Transcript, strict: bool) -> Self {
        Self {
            transcript,
            cursor: Mutex::new(0),
            strict,
        }
    }

    pub fn consumed(&self) -> usize {
        *self.cursor.lock().unwrap()
    }

    pub fn remaining(&self) -> usize {
        self.transcript.entries.len() - self.consumed()
    }
}

impl ChatBackend for ReplayBackend {
    fn chat(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let mut cursor = self.cursor.lock().unwrap();
        let entry = self
            .transcript
            .entries
            .get(*cursor)
            .ok_or(GatewayError::TranscriptExhausted(*cursor))?;
        if self.strict && entry.request != *request {
            return Err(GatewayError::TranscriptMismatch {
                index: *cursor,
                expected: Box::new(entry.request.clone()),
                got: Box::new(request.clone()),
            });
        }
        *cursor += 1;
        Ok(entry.response.clone())
    }
}

type StubFn = dyn Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync;

/// Deterministic in-process backend driven by a closure; counts calls.
pub struct StubBackend {
    respond: Box<StubFn>,
    calls: AtomicUsize,
}

impl StubBackend {
    pub fn new(
        respond: impl Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            respond: Box::new(respond),
            calls: AtomicUsize::new(0),
        }
    }

    /// Always answers with the same text.
    pub fn fixed(text: impl Into<String>) -> Self {
        let text = text.into();
        Self::new(move |_| Ok(text.clone()))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for StubBackend {
    fn chat(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.respond)(request)
    }
}
