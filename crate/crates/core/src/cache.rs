//! Content-addressed response cache for provider calls.
//!
//! Keys are SHA-256 digests of the request identity; on disk each entry is a
//! single file named by the hex digest and holding the raw response bytes.
//! Writes go through a temporary file and a rename, so concurrent writers of
//! the same key leave one complete copy behind (last writer wins).

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

/// Digest of `parts`, separated so that ("ab","c") and ("a","bc") differ.
pub fn cache_key(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
}

impl CacheStats {
    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }
}

#[derive(Debug)]
pub struct ResponseCache {
    dir: Option<PathBuf>,
    enabled: bool,
    memory: Mutex<HashMap<String, Vec<u8>>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl ResponseCache {
    /// Cache persisted under `dir` (created if missing).
    pub fn on_disk(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self::new(Some(dir), true))
    }

    /// Process-local cache.
    pub fn in_memory() -> Self {
        Self::new(None, true)
    }

    /// Never stores anything; every lookup misses.
    pub fn disabled() -> Self {
        Self::new(None, false)
    }

    fn new(dir: Option<PathBuf>, enabled: bool) -> Self {
        Self {
            dir,
            enabled,
            memory: Mutex::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<Vec<u8>> {
        let found = self.lookup(key);
        let counter = if found.is_some() { &self.hits } else { &self.misses };
        counter.fetch_add(1, Ordering::Relaxed);
        found
    }

    fn lookup(&self, key: &str) -> Option<Vec<u8>> {
        if !self.enabled {
            return None;
        }
        if let Some(v) = self.memory.lock().expect("cache lock").get(key) {
            return Some(v.clone());
        }
        let bytes = fs::read(self.dir.as_ref()?.join(key)).ok()?;
        self.memory.lock().expect("cache lock").insert(key.to_string(), bytes.clone());
        Some(bytes)
    }

    pub fn put(&self, key: &str, value: &[u8]) -> std::io::Result<()> {
        if !self.enabled {
            return Ok(());
        }
        if let Some(dir) = &self.dir {
            let tmp = dir.join(format!(
                ".{key}.{}.{}.tmp",
                std::process::id(),
                TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
            ));
            fs::write(&tmp, value)?;
            fs::rename(&tmp, dir.join(key))?;
        }
        self.memory.lock().expect("cache lock").insert(key.to_string(), value.to_vec());
        Ok(())
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_separates_parts() {
        assert_ne!(cache_key(&[b"ab", b"c"]), cache_key(&[b"a", b"bc"]));
        assert_eq!(cache_key(&[b"x"]).len(), 64);
    }

    #[test]
    fn disk_round_trip_survives_new_instance() {
        let dir = tempfile::tempdir().unwrap();
        let c = ResponseCache::on_disk(dir.path()).unwrap();
        let k = cache_key(&[b"p"]);
        assert_eq!(c.get(&k), None);
        c.put(&k, b"hello").unwrap();
        assert_eq!(c.get(&k).as_deref(), Some(&b"hello"[..]));
        assert_eq!(c.stats(), CacheStats { hits: 1, misses: 1 });

        let fresh = ResponseCache::on_disk(dir.path()).unwrap();
        assert_eq!(fresh.get(&k).as_deref(), Some(&b"hello"[..]));
        assert_eq!(fs::read(dir.path().join(&k)).unwrap(), b"hello");
    }

    #[test]
    fn disabled_never_hits() {
        let c = ResponseCache::disabled();
        c.put("k", b"v").unwrap();
        assert_eq!(c.get("k"), None);
        assert_eq!(c.stats().misses, 1);
    }

    #[test]
    fn concurrent_writers_leave_one_value() {
        let dir = tempfile::tempdir().unwrap();
        let c = ResponseCache::on_disk(dir.path()).unwrap();
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| c.put("same", b"payload").unwrap());
            }
        });
        let files: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 1);
        assert_eq!(fs::read(dir.path().join("same")).unwrap(), b"payload");
    }
}
