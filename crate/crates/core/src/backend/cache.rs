use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Serialize, Deserialize)]
struct CacheLine {
    fingerprint: String,
    response: Value,
}

/// Counters for one run.
///
/// `requests` and `distinct` only depend on what was asked for, so they are
/// identical across runs and worker counts. `backend_calls` and `hits` also
/// depend on what a persistent cache already held.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub requests: u64,
    pub distinct: u64,
    pub hits: u64,
    pub backend_calls: u64,
}

impl CacheStats {
    /// Share of requests served without a new distinct fingerprint.
    pub fn logical_hit_rate(&self) -> f64 {
        if self.requests == 0 {
            0.0
        } else {
            (self.requests - self.distinct) as f64 / self.requests as f64
        }
    }
}

/// Fingerprint-keyed response store, optionally backed by a JSONL file.
#[derive(Default)]
pub struct ResponseCache {
    entries: RwLock<HashMap<String, Value>>,
    seen: Mutex<HashSet<String>>,
    stats: Mutex<CacheStats>,
    path: Option<PathBuf>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens a persistent cache. A missing file starts empty; an unreadable
    /// or corrupt file also starts empty, with a warning, and is rewritten on
    /// the next [`ResponseCache::persist`].
    pub fn open(path: impl AsRef<Path>) -> Self {
        let path = path.as_ref().to_path_buf();
        let entries = match Self::read(&path) {
            Ok(e) => e,
            Err(msg) => {
                log::warn!("response cache {}: {msg}; starting cold", path.display());
                HashMap::new()
            }
        };
        ResponseCache {
            entries: RwLock::new(entries),
            path: Some(path),
            ..Default::default()
        }
    }

    fn read(path: &Path) -> Result<HashMap<String, Value>, String> {
        let file = match fs::File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(HashMap::new()),
            Err(e) => return Err(e.to_string()),
        };
        let mut out = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CacheLine =
                serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?;
            out.insert(rec.fingerprint, rec.response);
        }
        Ok(out)
    }

    /// Returns the stored response for `fingerprint`, calling `call` only
    /// when none is stored.
    pub fn get_or_try_insert<E>(
        &self,
        fingerprint: &str,
        call: impl FnOnce() -> Result<Value, E>,
    ) -> Result<Value, E> {
        {
            let first = self.seen.lock().insert(fingerprint.to_string());
            let mut stats = self.stats.lock();
            stats.requests += 1;
            if first {
                stats.distinct += 1;
            }
        }
        if let Some(v) = self.entries.read().get(fingerprint) {
            self.stats.lock().hits += 1;
            return Ok(v.clone());
        }
        self.stats.lock().backend_calls += 1;
        let value = call()?;
        self.entries
            .write()
            .insert(fingerprint.to_string(), value.clone());
        Ok(value)
    }

    pub fn stats(&self) -> CacheStats {
        *self.stats.lock()
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the cache file, sorted by fingerprint. No-op for in-memory
    /// caches.
    pub fn persist(&self) -> std::io::Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let sorted: BTreeMap<String, Value> = self
            .entries
            .read()
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        {
            let mut w = std::io::BufWriter::new(fs::File::create(&tmp)?);
            for (fingerprint, response) in sorted {
                serde_json::to_writer(
                    &mut w,
                    &CacheLine {
                        fingerprint,
                        response,
                    },
                )?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        fs::rename(tmp, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::cell::Cell;

    #[test]
    fn second_identical_request_is_a_hit() {
        let cache = ResponseCache::in_memory();
        let calls = Cell::new(0);
        for _ in 0..2 {
            let v = cache
                .get_or_try_insert::<()>("fp", || {
                    calls.set(calls.get() + 1);
                    Ok(json!(4.0))
                })
                .unwrap();
            assert_eq!(v, json!(4.0));
        }
        assert_eq!(calls.get(), 1);
        let s = cache.stats();
        assert_eq!(
            (s.requests, s.distinct, s.hits, s.backend_calls),
            (2, 1, 1, 1)
        );
        assert!((s.logical_hit_rate() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn errors_are_not_cached() {
        let cache = ResponseCache::in_memory();
        assert!(cache.get_or_try_insert("fp", || Err("down")).is_err());
        assert_eq!(
            cache
                .get_or_try_insert::<&str>("fp", || Ok(json!(1)))
                .unwrap(),
            json!(1)
        );
        assert_eq!(cache.stats().backend_calls, 2);
    }

    #[test]
    fn persists_across_instances() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let cache = ResponseCache::open(&path);
        cache
            .get_or_try_insert::<()>("a", || Ok(json!({"score": 1.5})))
            .unwrap();
        cache.persist().unwrap();

        let reopened = ResponseCache::open(&path);
        let v = reopened
            .get_or_try_insert::<()>("a", || panic!("must not call backend"))
            .unwrap();
        assert_eq!(v, json!({"score": 1.5}));
        assert_eq!(reopened.stats().backend_calls, 0);
    }

    #[test]
    fn corrupt_file_starts_cold() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        fs::write(&path, "{\"fingerprint\":\"a\",\"response\":1}\nnot json\n").unwrap();
        let cache = ResponseCache::open(&path);
        assert!(cache.is_empty());
        cache.get_or_try_insert::<()>("b", || Ok(json!(2))).unwrap();
        cache.persist().unwrap();
        assert_eq!(ResponseCache::open(&path).len(), 1);
    }
}
