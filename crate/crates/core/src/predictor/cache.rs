//! Persistent response cache: an append-only JSON-lines file of
//! `{key, raw_response, timestamp}` records, mirrored in memory.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    key: String,
    raw_response: String,
    timestamp: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cache {path}, line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

struct Inner {
    entries: HashMap<String, String>,
    file: Option<(PathBuf, File)>,
}

/// All writes go through one mutex, so the file has a single writer even
/// when many requests finish at once. Later records for a key win on load.
pub struct ResponseCache {
    inner: Mutex<Inner>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self {
            inner: Mutex::new(Inner {
                entries: HashMap::new(),
                file: None,
            }),
        }
    }

    /// Opens (creating if needed) a cache file and loads its records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CacheError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| CacheError::Io {
            path: path.clone(),
            source,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io)?);
            for (idx, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheLine = serde_json::from_str(&line).map_err(|e| CacheError::Corrupt {
                    path: path.clone(),
                    line: idx + 1,
                    message: e.to_string(),
                })?;
                entries.insert(rec.key, rec.raw_response);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        Ok(Self {
            inner: Mutex::new(Inner {
                entries,
                file: Some((path, file)),
            }),
        })
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.inner.lock().unwrap().entries.get(key).cloned()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.inner.lock().unwrap().entries.contains_key(key)
    }

    pub fn insert(&self, key: &str, raw_response: &str) -> Result<(), CacheError> {
        let mut inner = self.inner.lock().unwrap();
        if let Some((path, file)) = inner.file.as_mut() {
            let line = CacheLine {
                key: key.to_string(),
                raw_response: raw_response.to_string(),
                timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            };
            let mut buf = serde_json::to_string(&line).expect("cache line serializes");
            buf.push('\n');
            file.write_all(buf.as_bytes()).map_err(|source| CacheError::Io {
                path: path.clone(),
                source,
            })?;
        }
        inner.entries.insert(key.to_string(), raw_response.to_string());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
