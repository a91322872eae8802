//! On-disk first-generation cache for the LLM adapter.
//!
//! One file per (environment, adapter):
//!
//! ```text
//! # langrid adapter cache v1
//! # digest <hex digest of environment key, adapter id and prompt context>
//! <state id>\t<text>
//! ```
//!
//! Text escapes `\\`, `\t` and `\n`. A file with a different digest is
//! stale and starts over; an unreadable file is rebuilt empty.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use sha2::{Digest, Sha256};

use super::AdapterError;

const MAGIC: &str = "# langrid adapter cache v1";

/// Digest binding a cache file to its environment, adapter and prompt.
pub fn cache_digest(env_key: &str, adapter_id: &str, prompt_context: &str) -> String {
    let mut h = Sha256::new();
    for part in [env_key, adapter_id, prompt_context] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    hex::encode(&h.finalize()[..16])
}

/// Single-writer, many-reader state id → text table.
#[derive(Debug)]
pub struct AdapterCache {
    map: RwLock<HashMap<String, String>>,
    file: Mutex<Option<File>>,
    path: Option<PathBuf>,
    digest: String,
}

impl AdapterCache {
    pub fn in_memory(digest: &str) -> Self {
        Self {
            map: RwLock::new(HashMap::new()),
            file: Mutex::new(None),
            path: None,
            digest: digest.into(),
        }
    }

    /// Opens or creates the cache file at `path`.
    pub fn open(path: &Path, digest: &str) -> Result<Self, AdapterError> {
        let io = |e: std::io::Error| AdapterError::Cache(format!("{}: {e}", path.display()));
        let mut map = HashMap::new();
        let mut rebuild = true;
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(io)?;
            match parse(&text, digest) {
                Ok(Some(m)) => {
                    map = m;
                    rebuild = false;
                }
                Ok(None) => log::info!("{}: prompt changed, starting a fresh cache", path.display()),
                Err(line) => log::warn!(
                    "{}: corrupt cache (line {line}), rebuilding empty",
                    path.display()
                ),
            }
        }
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let file = if rebuild {
            let mut f = File::create(path).map_err(io)?;
            write!(f, "{MAGIC}\n# digest {digest}\n").map_err(io)?;
            f
        } else {
            OpenOptions::new().append(true).open(path).map_err(io)?
        };
        Ok(Self {
            map: RwLock::new(map),
            file: Mutex::new(Some(file)),
            path: Some(path.to_path_buf()),
            digest: digest.into(),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn get(&self, state_id: &str) -> Option<String> {
        self.map.read().unwrap().get(state_id).cloned()
    }

    /// Stores `text` unless the state already has an entry; returns the
    /// text that is now cached.
    pub fn put(&self, state_id: &str, text: &str) -> Result<String, AdapterError> {
        let mut map = self.map.write().unwrap();
        if let Some(existing) = map.get(state_id) {
            return Ok(existing.clone());
        }
        if let Some(f) = self.file.lock().unwrap().as_mut() {
            writeln!(f, "{}\t{}", escape(state_id), escape(text))
                .and_then(|_| f.flush())
                .map_err(|e| AdapterError::Cache(e.to_string()))?;
        }
        map.insert(state_id.to_string(), text.to_string());
        Ok(text.to_string())
    }

    pub fn len(&self) -> usize {
        self.map.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `Ok(None)` for a stale digest, `Err(line)` for a malformed file.
fn parse(text: &str, digest: &str) -> Result<Option<HashMap<String, String>>, usize> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(1);
    }
    let found = lines
        .next()
        .and_then(|l| l.strip_prefix("# digest "))
        .ok_or(2usize)?;
    if found.trim() != digest {
        return Ok(None);
    }
    let mut map = HashMap::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('\t').ok_or(i + 3)?;
        let (k, v) = (unescape(k).ok_or(i + 3)?, unescape(v).ok_or(i + 3)?);
        map.entry(k).or_insert(v);
    }
    Ok(Some(map))
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match chars.next()? {
            '\\' => '\\',
            't' => '\t',
            'n' => '\n',
            'r' => '\r',
            _ => return None,
        });
    }
    Some(out)
}
