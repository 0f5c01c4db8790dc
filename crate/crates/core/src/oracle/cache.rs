use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{Extraction, Judgment, OracleQuery};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CacheError {
    #[error("cache entry {0} failed its integrity check")]
    Corrupt(String),
    #[error("cache i/o: {0}")]
    Io(String),
}

/// Content address of one oracle request.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey(String);

impl CacheKey {
    /// Digest of backend id, atom kind, query text, channel, window, call id
    /// and the window text itself.
    pub fn for_query(backend_id: &str, query: &OracleQuery) -> Self {
        let mut h = Sha256::new();
        for part in [
            backend_id,
            query.target.kind_tag(),
            query.target.text(),
            query.target.channel().tag(),
            &query.window.lo.to_string(),
            &query.window.hi.to_string(),
            &query.call_id,
        ] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        h.update(Sha256::digest(query.window_text.as_bytes()));
        CacheKey(hex::encode(h.finalize()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CachedValue {
    Judgment(Judgment),
    Extraction(Extraction),
}

#[derive(Serialize, Deserialize)]
struct Entry {
    digest: String,
    payload: serde_json::Value,
}

fn payload_digest(payload: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(payload.to_string().as_bytes()))
}

/// Memo table for backend responses. Reads proceed concurrently; writes are
/// serialized. With a directory, entries persist as one JSON file per key.
#[derive(Debug, Default)]
pub struct ResponseCache {
    memory: RwLock<HashMap<CacheKey, CachedValue>>,
    dir: Option<PathBuf>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn persistent(dir: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| CacheError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            memory: RwLock::default(),
            dir: Some(dir),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn len(&self) -> usize {
        self.memory.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn path(&self, key: &CacheKey) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{}.json", key.0)))
    }

    /// Looks up `key`, consulting the directory on a memory miss.
    pub fn get(&self, key: &CacheKey) -> Result<Option<CachedValue>, CacheError> {
        if let Some(v) = self.memory.read().expect("cache lock").get(key) {
            return Ok(Some(v.clone()));
        }
        let Some(path) = self.path(key) else {
            return Ok(None);
        };
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(CacheError::Io(format!("{}: {e}", path.display()))),
        };
        let corrupt = || CacheError::Corrupt(key.0.clone());
        let entry: Entry = serde_json::from_slice(&bytes).map_err(|_| corrupt())?;
        if payload_digest(&entry.payload) != entry.digest {
            return Err(corrupt());
        }
        let value: CachedValue = serde_json::from_value(entry.payload).map_err(|_| corrupt())?;
        self.memory
            .write()
            .expect("cache lock")
            .insert(key.clone(), value.clone());
        Ok(Some(value))
    }

    /// Stores `value`; directory writes go through a temporary file and rename.
    pub fn put(&self, key: &CacheKey, value: &CachedValue) -> Result<(), CacheError> {
        self.memory
            .write()
            .expect("cache lock")
            .insert(key.clone(), value.clone());
        let Some(path) = self.path(key) else {
            return Ok(());
        };
        let payload = serde_json::to_value(value).expect("cache value serializes");
        let entry = Entry {
            digest: payload_digest(&payload),
            payload,
        };
        let io = |e: std::io::Error| CacheError::Io(format!("{}: {e}", path.display()));
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(serde_json::to_string(&entry).expect("entry serializes").as_bytes())
            .map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, &path).map_err(io)?;
        Ok(())
    }
}
