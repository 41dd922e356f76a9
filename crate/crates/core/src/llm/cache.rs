//! Newline-delimited JSON caches shared by the LLM gateway and the remote
//! embedding provider.
//!
//! Each line is one JSON object with a `key` field. Lines are appended with a
//! single `write_all` on a file opened in append mode, under a mutex, so
//! concurrent writers never interleave partial entries. A torn trailing line
//! from a crashed writer is skipped on load.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde_json::Value;

#[derive(Debug)]
pub struct JsonlCache {
    path: PathBuf,
    entries: RwLock<HashMap<String, Value>>,
    writer: Mutex<Option<File>>,
    skipped_lines: usize,
}

impl JsonlCache {
    /// Opens (creating parent directories as needed) and loads every entry.
    /// Later lines win when a key repeats.
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        let mut skipped_lines = 0;
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for line in reader.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Value>(&line) {
                    Ok(v) => match v.get("key").and_then(Value::as_str) {
                        Some(k) => {
                            entries.insert(k.to_string(), v);
                        }
                        None => skipped_lines += 1,
                    },
                    Err(_) => skipped_lines += 1,
                }
            }
        }
        Ok(Self {
            path,
            entries: RwLock::new(entries),
            writer: Mutex::new(None),
            skipped_lines,
        })
    }

    /// An empty cache that never touches disk.
    pub fn in_memory() -> Self {
        Self {
            path: PathBuf::new(),
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
            skipped_lines: 0,
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn skipped_lines(&self) -> usize {
        self.skipped_lines
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<Value> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.read().expect("cache lock").contains_key(key)
    }

    /// Writes every entry to `path`, one per line, sorted by key.
    pub fn write_sorted(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let entries = self.entries.read().expect("cache lock");
        let mut keys: Vec<&String> = entries.keys().collect();
        keys.sort();
        let mut out = Vec::new();
        for k in keys {
            serde_json::to_writer(&mut out, &entries[k])?;
            out.push(b'\n');
        }
        std::fs::write(path, out)
    }

    /// Appends `entry` (which must carry a string `key`) and indexes it.
    pub fn insert(&self, entry: Value) -> io::Result<()> {
        let key = entry
            .get("key")
            .and_then(Value::as_str)
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "cache entry without key"))?
            .to_string();
        if !self.path.as_os_str().is_empty() {
            let mut line = serde_json::to_string(&entry)?;
            line.push('\n');
            let mut guard = self.writer.lock().expect("cache writer lock");
            if guard.is_none() {
                if let Some(parent) = self.path.parent() {
                    if !parent.as_os_str().is_empty() {
                        std::fs::create_dir_all(parent)?;
                    }
                }
                *guard = Some(OpenOptions::new().create(true).append(true).open(&self.path)?);
            }
            let file = guard.as_mut().expect("opened above");
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        self.entries.write().expect("cache lock").insert(key, entry);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn entries_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/cache.jsonl");
        let c = JsonlCache::open(&path).unwrap();
        c.insert(json!({"key": "a", "response": "one"})).unwrap();
        c.insert(json!({"key": "b", "response": "two"})).unwrap();
        drop(c);
        let c = JsonlCache::open(&path).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.get("b").unwrap()["response"], "two");
    }

    #[test]
    fn torn_last_line_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        std::fs::write(&path, "{\"key\":\"a\",\"response\":\"x\"}\n{\"key\":\"b\",\"resp").unwrap();
        let c = JsonlCache::open(&path).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.skipped_lines(), 1);
    }

    #[test]
    fn concurrent_writers_produce_whole_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let c = JsonlCache::open(&path).unwrap();
        std::thread::scope(|s| {
            for t in 0..8 {
                let c = &c;
                s.spawn(move || {
                    for i in 0..50 {
                        let body = "x".repeat(1000 + i);
                        c.insert(json!({"key": format!("{t}-{i}"), "response": body})).unwrap();
                    }
                });
            }
        });
        let reopened = JsonlCache::open(&path).unwrap();
        assert_eq!(reopened.len(), 400);
        assert_eq!(reopened.skipped_lines(), 0);
    }
}
