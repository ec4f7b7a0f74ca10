//! Append-only JSONL explanation cache.
//!
//! One [`CacheEntry`] per line. On load, later lines win over earlier lines
//! with the same key. A trailing partial line (interrupted write) is cut off
//! when the file is opened.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::Fnv1a64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub example_id: String,
    pub input_text: String,
    pub explanation_text: String,
    pub backend_id: String,
    pub prompt_version: String,
    pub created_at: DateTime<Utc>,
}

/// 16 hex digits of FNV-1a-64 over `prompt_version ‖ 0x1F ‖ input_text`.
pub fn cache_key(prompt_version: &str, input_text: &str) -> String {
    let mut h = Fnv1a64::new();
    h.update(prompt_version.as_bytes())
        .update(&[0x1f])
        .update(input_text.as_bytes());
    format!("{:016x}", h.finish())
}

#[derive(Debug)]
pub struct ExplanationCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, CacheEntry>>,
    appender: Mutex<Option<File>>,
}

impl ExplanationCache {
    /// A cache that lives only in memory.
    pub fn in_memory() -> Self {
        ExplanationCache {
            path: None,
            entries: RwLock::new(HashMap::new()),
            appender: Mutex::new(None),
        }
    }

    /// Load `path` if it exists and open it for appending.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;

        let mut entries = HashMap::new();
        let mut raw = Vec::new();
        file.read_to_end(&mut raw).map_err(|e| Error::io(&path, e))?;
        let complete = raw.last().is_none_or(|&b| b == b'\n');
        let lines: Vec<_> = BufReader::new(raw.as_slice()).lines().collect();
        let n = lines.len();
        for (i, line) in lines.into_iter().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<CacheEntry>(&line) {
                Ok(entry) => {
                    entries.insert(entry.key.clone(), entry);
                }
                Err(_) if i + 1 == n && !complete => {}
                Err(e) => {
                    return Err(Error::json(format!("{} line {}", path.display(), i + 1), e));
                }
            }
        }
        if !complete {
            // Cut the partial line so the next append starts on a fresh line.
            let keep = raw.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
            file.set_len(keep as u64).map_err(|e| Error::io(&path, e))?;
        }

        Ok(ExplanationCache {
            path: Some(path),
            entries: RwLock::new(entries),
            appender: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Persist one entry (one line, one write) and make it visible to readers.
    pub fn insert(&self, entry: CacheEntry) -> Result<()> {
        let mut appender = self.appender.lock().expect("appender lock");
        if let Some(file) = appender.as_mut() {
            let mut line = serde_json::to_vec(&entry).map_err(|e| Error::json("cache entry", e))?;
            line.push(b'\n');
            let path = self.path.as_deref().unwrap_or(Path::new("<cache>"));
            file.write_all(&line).map_err(|e| Error::io(path, e))?;
            file.flush().map_err(|e| Error::io(path, e))?;
        }
        self.entries
            .write()
            .expect("cache lock")
            .insert(entry.key.clone(), entry);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(key: &str, text: &str) -> CacheEntry {
        CacheEntry {
            key: key.into(),
            example_id: "e".into(),
            input_text: "in".into(),
            explanation_text: text.into(),
            backend_id: "b".into(),
            prompt_version: "v".into(),
            created_at: DateTime::from_timestamp(0, 0).unwrap(),
        }
    }

    #[test]
    fn key_depends_on_version_and_text_only() {
        let a = cache_key("v1", "hello");
        assert_eq!(a.len(), 16);
        assert_eq!(a, cache_key("v1", "hello"));
        assert_ne!(a, cache_key("v2", "hello"));
        assert_ne!(a, cache_key("v1", "hello!"));
        // separator keeps the two fields apart
        assert_ne!(cache_key("ab", "c"), cache_key("a", "bc"));
    }

    #[test]
    fn last_write_wins_on_reload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        {
            let c = ExplanationCache::open(&path).unwrap();
            c.insert(entry("k", "first")).unwrap();
            c.insert(entry("k", "second")).unwrap();
        }
        let c = ExplanationCache::open(&path).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.get("k").unwrap().explanation_text, "second");
    }

    #[test]
    fn partial_trailing_line_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let good = serde_json::to_string(&entry("k1", "ok")).unwrap();
        std::fs::write(&path, format!("{good}\n{{\"key\":\"k2\",\"exa")).unwrap();
        {
            let c = ExplanationCache::open(&path).unwrap();
            assert_eq!(c.len(), 1);
            c.insert(entry("k3", "later")).unwrap();
        }
        let c = ExplanationCache::open(&path).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.get("k3").is_some());
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let good = serde_json::to_string(&entry("k1", "ok")).unwrap();
        std::fs::write(&path, format!("not json\n{good}\n")).unwrap();
        assert!(matches!(ExplanationCache::open(&path), Err(Error::Json { .. })));
    }
}
