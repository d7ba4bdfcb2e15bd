//! Enrollment pool and the cosine decision rule.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::Embedding;
use crate::error::{Error, Result};

pub const POOL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub label: String,
    pub embedding: Embedding,
}

/// Ordered identity references. Order matters: it breaks similarity ties.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnrollmentPool {
    entries: Vec<PoolEntry>,
}

#[derive(Serialize, Deserialize)]
struct PoolFile {
    version: u32,
    dimension: usize,
    entries: Vec<PoolEntry>,
}

/// Outcome of scoring one embedding against the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub index: usize,
    pub label: String,
    pub similarity: f64,
}

impl EnrollmentPool {
    pub fn new(entries: Vec<PoolEntry>) -> Result<Self> {
        let mut pool = Self::default();
        for e in entries {
            pool.push(e.label, e.embedding)?;
        }
        Ok(pool)
    }

    pub fn push(&mut self, label: impl Into<String>, embedding: Embedding) -> Result<()> {
        let label = label.into();
        if self.entries.iter().any(|e| e.label == label) {
            return Err(Error::InvalidInput(format!(
                "duplicate enrollment label '{label}'"
            )));
        }
        if let Some(d) = self.dim() {
            if d != embedding.dim() {
                return Err(Error::Mismatch(format!(
                    "enrollment '{label}' has dimension {}, pool has {d}",
                    embedding.dim()
                )));
            }
        }
        self.entries.push(PoolEntry { label, embedding });
        Ok(())
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.entries.first().map(|e| e.embedding.dim())
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.label.as_str())
    }

    /// Sorts entries by label.
    pub fn sort_by_label(&mut self) {
        self.entries.sort_by(|a, b| a.label.cmp(&b.label));
    }

    fn similarities(&self, e: &Embedding) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::InvalidInput("empty enrollment pool".into()));
        }
        let d = self.dim().unwrap_or(0);
        if e.dim() != d {
            return Err(Error::Mismatch(format!(
                "embedding dimension {} vs pool dimension {d}",
                e.dim()
            )));
        }
        Ok(self.entries.iter().map(|p| p.embedding.dot(e)).collect())
    }

    fn decision(&self, index: usize, similarity: f64) -> Decision {
        Decision {
            index,
            label: self.entries[index].label.clone(),
            similarity,
        }
    }

    /// Highest cosine similarity; the earliest entry wins ties.
    pub fn decide(&self, e: &Embedding) -> Result<Decision> {
        let sims = self.similarities(e)?;
        let mut best = 0;
        for (i, s) in sims.iter().enumerate().skip(1) {
            if *s > sims[best] {
                best = i;
            }
        }
        Ok(self.decision(best, sims[best]))
    }

    /// Joint decision for simultaneous items: greedily pairs items with
    /// distinct entries by descending similarity. Items left over once the
    /// pool is exhausted fall back to [`EnrollmentPool::decide`].
    pub fn decide_exclusive(&self, items: &[Embedding]) -> Result<Vec<Decision>> {
        let sims = items
            .iter()
            .map(|e| self.similarities(e))
            .collect::<Result<Vec<_>>>()?;
        let mut pairs: Vec<(usize, usize)> = (0..items.len())
            .flat_map(|i| (0..self.len()).map(move |j| (i, j)))
            .collect();
        // Stable sort keeps (item, entry) order among equal similarities.
        pairs.sort_by(|a, b| sims[b.0][b.1].total_cmp(&sims[a.0][a.1]));
        let mut out: Vec<Option<Decision>> = vec![None; items.len()];
        let mut taken = vec![false; self.len()];
        for (i, j) in pairs {
            if out[i].is_none() && !taken[j] {
                taken[j] = true;
                out[i] = Some(self.decision(j, sims[i][j]));
            }
        }
        out.into_iter()
            .zip(items)
            .map(|(d, e)| d.map(Ok).unwrap_or_else(|| self.decide(e)))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = PoolFile {
            version: POOL_FORMAT_VERSION,
            dimension: self.dim().unwrap_or(0),
            entries: self.entries.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PoolFile = serde_json::from_str(text)?;
        if file.version != POOL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "enrollment pool version {} (expected {POOL_FORMAT_VERSION})",
                file.version
            )));
        }
        let pool = Self::new(file.entries)?;
        if pool.dim().is_some_and(|d| d != file.dimension) {
            return Err(Error::Mismatch(format!(
                "pool header says dimension {}, entries have {}",
                file.dimension,
                pool.dim().unwrap_or(0)
            )));
        }
        Ok(pool)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
