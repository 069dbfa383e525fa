use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::Result;

/// What one `(method, point)` evaluation produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEvaluation {
    pub train_seed: u64,
    pub eval_seeds: Vec<u64>,
    /// Raw return per eval seed; empty when the evaluation failed.
    pub per_seed: Vec<f64>,
    /// Why the evaluation failed, if it did.
    pub failure: Option<String>,
    /// Compact text form of the controller ([`crate::controllers::Policy::compact`]).
    pub policy: Option<String>,
    /// Models trained to produce this evaluation (0 for fixed baselines).
    pub budget_units: usize,
}

impl PointEvaluation {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    pub fn raw_mean(&self) -> f64 {
        if self.failed() || self.per_seed.is_empty() {
            return f64::NAN;
        }
        self.per_seed.iter().sum::<f64>() / self.per_seed.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey {
    pub method: String,
    pub task: String,
    pub point_index: usize,
    /// Hash of trainer settings, context vector and seeds.
    pub fingerprint: String,
}

#[derive(Serialize, Deserialize)]
struct Line {
    key: CacheKey,
    value: PointEvaluation,
}

/// Write-once map from `(method, task, point, configuration)` to evaluations.
///
/// Concurrent writers to distinct keys do not block each other's work; for a
/// duplicate key the first value wins and later values must be identical.
#[derive(Debug, Default)]
pub struct ScoreCache {
    entries: Mutex<BTreeMap<CacheKey, PointEvaluation>>,
    hits: AtomicUsize,
    trainings: AtomicUsize,
}

impl ScoreCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &CacheKey) -> Option<PointEvaluation> {
        self.entries.lock().expect("cache lock").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    /// Models trained through this cache (baselines count zero).
    pub fn trainings(&self) -> usize {
        self.trainings.load(Ordering::Relaxed)
    }

    /// Returns the cached value, or computes and stores it. The flag is
    /// `true` on a cache hit.
    pub fn get_or_compute(
        &self,
        key: CacheKey,
        compute: impl FnOnce() -> Result<PointEvaluation>,
    ) -> Result<(PointEvaluation, bool)> {
        if let Some(v) = self.get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok((v, true));
        }
        let value = compute()?;
        self.trainings.fetch_add(value.budget_units, Ordering::Relaxed);
        let mut map = self.entries.lock().expect("cache lock");
        match map.get(&key) {
            Some(first) => {
                assert_eq!(first, &value, "non-deterministic evaluation for {key:?}");
                Ok((first.clone(), false))
            }
            None => {
                map.insert(key, value.clone());
                Ok((value, false))
            }
        }
    }

    /// Loads a cache file written by [`ScoreCache::save`]; a missing file
    /// yields an empty cache.
    pub fn load(path: &Path) -> Result<Self> {
        let cache = Self::new();
        if !path.exists() {
            return Ok(cache);
        }
        let mut map = cache.entries.lock().expect("cache lock");
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let l: Line = serde_json::from_str(&line)?;
            map.insert(l.key, l.value);
        }
        drop(map);
        Ok(cache)
    }

    /// Writes one JSON object per line, sorted by key.
    pub fn save(&self, path: &Path) -> Result<()> {
        let map = self.entries.lock().expect("cache lock");
        let mut w = BufWriter::new(File::create(path)?);
        for (key, value) in map.iter() {
            let line = Line {
                key: key.clone(),
                value: value.clone(),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }
}
