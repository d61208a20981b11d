//! Per-replica results kept in a JSON-lines file so interrupted runs resume.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// A replica result addressed by (n, replica index).
pub trait Keyed: Serialize + DeserializeOwned + Clone + Send + Sync {
    fn key(&self) -> (usize, usize);
}

pub struct ReplicaStore<T> {
    path: Option<PathBuf>,
    done: BTreeMap<(usize, usize), T>,
    file: Option<Mutex<File>>,
}

impl<T: Keyed> ReplicaStore<T> {
    pub fn in_memory() -> Self {
        ReplicaStore { path: None, done: BTreeMap::new(), file: None }
    }

    /// Opens `path`, loading any complete lines already there. A torn final
    /// line from an interrupted write is dropped.
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut done = BTreeMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
            let last = lines.len();
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<T>(line) {
                    Ok(rec) => {
                        done.insert(rec.key(), rec);
                    }
                    Err(_) if i + 1 == last => log::warn!("dropping torn checkpoint line in {}", path.display()),
                    Err(e) => return Err(Error::CacheFormat { path: path.to_path_buf(), reason: format!("line {}: {e}", i + 1) }),
                }
            }
            // rewrite without the torn tail so appends start on a fresh line
            let mut f = File::create(path)?;
            for rec in done.values() {
                writeln!(f, "{}", serde_json::to_string(rec)?)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(ReplicaStore { path: Some(path.to_path_buf()), done, file: Some(Mutex::new(file)) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn completed(&self) -> usize {
        self.done.len()
    }

    /// Returns results for `keys` in order, computing the missing ones in
    /// parallel and appending each to the file as it finishes.
    pub fn run(&mut self, keys: &[(usize, usize)], f: impl Fn(usize, usize) -> Result<T> + Sync) -> Result<Vec<T>> {
        let missing: Vec<(usize, usize)> = keys.iter().copied().filter(|k| !self.done.contains_key(k)).collect();
        if !missing.is_empty() && !self.done.is_empty() {
            log::info!("resuming: {} of {} replicas already done", keys.len() - missing.len(), keys.len());
        }
        let file = &self.file;
        let fresh: Vec<T> = missing
            .par_iter()
            .map(|&(n, r)| {
                let rec = f(n, r)?;
                if let Some(file) = file {
                    let line = serde_json::to_string(&rec)?;
                    let mut g = file.lock().expect("checkpoint file lock");
                    writeln!(g, "{line}")?;
                    g.flush()?;
                }
                Ok(rec)
            })
            .collect::<Result<_>>()?;
        for rec in fresh {
            self.done.insert(rec.key(), rec);
        }
        Ok(keys.iter().filter_map(|k| self.done.get(k).cloned()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    struct Rec {
        n: usize,
        r: usize,
        v: f64,
    }

    impl Keyed for Rec {
        fn key(&self) -> (usize, usize) {
            (self.n, self.r)
        }
    }

    #[test]
    fn resumes_without_recomputing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let keys: Vec<(usize, usize)> = (0..6).map(|r| (8, r)).collect();
        let calls = AtomicUsize::new(0);
        let f = |n: usize, r: usize| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok(Rec { n, r, v: 0.1 * r as f64 + 1.0 / 3.0 })
        };
        let first = ReplicaStore::open(&path).unwrap().run(&keys[..4], f).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 4);
        // simulate a torn write
        let mut fh = OpenOptions::new().append(true).open(&path).unwrap();
        write!(fh, "{{\"n\":8,\"r\":").unwrap();
        let mut store = ReplicaStore::open(&path).unwrap();
        assert_eq!(store.completed(), 4);
        let all = store.run(&keys, f).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 6);
        assert_eq!(&all[..4], &first[..]);
        // bit-exact float round trip
        assert_eq!(all[1].v, 0.1 + 1.0 / 3.0);
    }
}
