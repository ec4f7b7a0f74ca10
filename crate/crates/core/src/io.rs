use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Write a file, creating parent directories first.
pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_json_pretty<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::json(path.display().to_string(), e))?;
    write_file(path, json + "\n")
}

/// One JSON document per line.
pub fn write_jsonl<'a, V: Serialize + 'a>(path: &Path, rows: impl IntoIterator<Item = &'a V>) -> Result<()> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row).map_err(|e| Error::json(path.display().to_string(), e))?);
        out.push('\n');
    }
    write_file(path, out)
}

pub fn read_jsonl<V: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<V>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::json(format!("{} line {}", path.display(), i + 1), e)))
        .collect()
}

pub fn read_json<V: serde::de::DeserializeOwned>(path: &Path) -> Result<V> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::json(path.display().to_string(), e))
}
