use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{ChatBackend, ChatRequest, ChatResponse, LlmError};

/// SHA-256 (hex) of the canonical JSON form of the model id, temperature and
/// messages. Object keys are sorted, so the hash does not depend on how the
/// request was serialized.
pub fn fingerprint(request: &ChatRequest) -> String {
    let canonical = json!({
        "messages": request.messages,
        "model_id": request.model_id,
        "temperature": request.temperature,
    });
    let bytes = serde_json::to_vec(&canonical).expect("request serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub request: ChatRequest,
    pub response: ChatResponse,
}

impl CassetteEntry {
    pub fn new(request: ChatRequest, response: ChatResponse) -> Self {
        Self {
            fingerprint: fingerprint(&request),
            request,
            response,
        }
    }
}

/// Request/response pairs keyed by fingerprint, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cassette {
    entries: Vec<CassetteEntry>,
    by_fingerprint: HashMap<String, usize>,
}

impl Cassette {
    /// Reads a JSONL cassette. A missing file is an empty cassette.
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Self::default()),
            Err(source) => {
                return Err(LlmError::Io {
                    path: path.to_path_buf(),
                    source,
                })
            }
        };
        let mut cassette = Self::default();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| LlmError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |message: String| LlmError::CorruptCassette {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let entry: CassetteEntry =
                serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            cassette.insert(entry)?;
        }
        Ok(cassette)
    }

    /// Writes the cassette as JSONL, one entry per line.
    pub fn save(&self, path: &Path) -> Result<(), LlmError> {
        let io = |source| LlmError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry).expect("entry serializes"));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(io)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[CassetteEntry] {
        &self.entries
    }

    pub fn get(&self, fingerprint: &str) -> Option<&CassetteEntry> {
        self.by_fingerprint.get(fingerprint).map(|&i| &self.entries[i])
    }

    /// Adds an entry. Returns false when an identical response is already
    /// stored under the fingerprint; a different response is a conflict.
    pub fn insert(&mut self, entry: CassetteEntry) -> Result<bool, LlmError> {
        if let Some(existing) = self.get(&entry.fingerprint) {
            if existing.response.text != entry.response.text {
                return Err(LlmError::CassetteConflict {
                    fingerprint: entry.fingerprint,
                });
            }
            return Ok(false);
        }
        self.by_fingerprint
            .insert(entry.fingerprint.clone(), self.entries.len());
        self.entries.push(entry);
        Ok(true)
    }

    /// Union with `other`; returns the number of entries added.
    pub fn merge(&mut self, other: &Cassette) -> Result<usize, LlmError> {
        let mut added = 0;
        for entry in &other.entries {
            if self.insert(entry.clone())? {
                added += 1;
            }
        }
        Ok(added)
    }

    /// 1-based positions of entries whose stored fingerprint does not match
    /// their request.
    pub fn verify(&self) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| fingerprint(&e.request) != e.fingerprint)
            .map(|(i, _)| i + 1)
            .collect()
    }
}

#[derive(Clone)]
pub enum CassetteMode {
    /// Answer only from the cassette; a miss is an error.
    Replay,
    /// Answer from the cassette when possible, otherwise ask `inner` and
    /// append the exchange.
    Record(Arc<dyn ChatBackend>),
}

/// A backend over a cassette file. Recorded entries are appended to the file
/// as soon as they arrive.
pub struct CassetteBackend {
    mode: CassetteMode,
    path: Option<PathBuf>,
    state: Mutex<Cassette>,
}

impl CassetteBackend {
    /// Fails when `path` does not exist; replaying nothing is always a mistake.
    pub fn replay(path: &Path) -> Result<Self, LlmError> {
        if !path.exists() {
            return Err(LlmError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::from(std::io::ErrorKind::NotFound),
            });
        }
        Ok(Self {
            mode: CassetteMode::Replay,
            path: Some(path.to_path_buf()),
            state: Mutex::new(Cassette::load(path)?),
        })
    }

    pub fn record(path: &Path, inner: Arc<dyn ChatBackend>) -> Result<Self, LlmError> {
        Ok(Self {
            mode: CassetteMode::Record(inner),
            path: Some(path.to_path_buf()),
            state: Mutex::new(Cassette::load(path)?),
        })
    }

    /// A cassette that lives only in memory.
    pub fn in_memory(cassette: Cassette, mode: CassetteMode) -> Self {
        Self {
            mode,
            path: None,
            state: Mutex::new(cassette),
        }
    }

    pub fn snapshot(&self) -> Cassette {
        self.state.lock().expect("cassette lock poisoned").clone()
    }

    fn append(&self, entry: &CassetteEntry) -> Result<(), LlmError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let io = |source| LlmError::Io {
            path: path.clone(),
            source,
        };
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io)?;
        let mut line = serde_json::to_string(entry).expect("entry serializes");
        line.push('\n');
        file.write_all(line.as_bytes()).map_err(io)
    }
}

impl ChatBackend for CassetteBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let fp = fingerprint(request);
        if let Some(hit) = self.state.lock().expect("cassette lock poisoned").get(&fp) {
            return Ok(hit.response.clone());
        }
        let inner = match &self.mode {
            CassetteMode::Replay => return Err(LlmError::ReplayMiss { fingerprint: fp }),
            CassetteMode::Record(inner) => inner,
        };
        let response = inner.complete(request)?;
        let entry = CassetteEntry::new(request.clone(), response.clone());
        // Concurrent sessions may record the same request; keep the first.
        let mut state = self.state.lock().expect("cassette lock poisoned");
        if let Some(existing) = state.get(&fp) {
            return Ok(existing.response.clone());
        }
        self.append(&entry)?;
        state.insert(entry)?;
        Ok(response)
    }
}
