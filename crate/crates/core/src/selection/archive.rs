use serde::{Deserialize, Serialize};

use crate::metrics::FitnessVector;

use super::novelty::knn_novelty;
use super::SelectionError;

pub const DEFAULT_CAPACITY: usize = 256;
pub const DEFAULT_K: usize = 15;
/// Novelty reported against an empty archive.
pub const DEFAULT_NOVELTY: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub graph_id: String,
    pub fitness: FitnessVector,
    pub descriptor: Vec<f64>,
}

/// Archive of mutually non-dominated candidates.
///
/// Insertion rejects candidates dominated by (or identical to) an existing
/// entry and evicts entries the newcomer dominates. Above capacity the entry
/// least novel relative to the rest of the archive is evicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QdArchive {
    entries: Vec<ArchiveEntry>,
    capacity: usize,
    k: usize,
    default_novelty: f64,
}

impl QdArchive {
    pub fn new(capacity: usize, k: usize) -> Result<Self, SelectionError> {
        if capacity == 0 || k == 0 {
            return Err(SelectionError::InvalidArchiveParams { capacity, k });
        }
        Ok(Self { entries: Vec::new(), capacity, k, default_novelty: DEFAULT_NOVELTY })
    }

    pub fn with_default_novelty(mut self, novelty: f64) -> Self {
        self.default_novelty = novelty;
        self
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// k-NN novelty of a descriptor against the archive; the configured
    /// default when the archive is empty.
    pub fn novelty(&self, descriptor: &[f64]) -> f64 {
        knn_novelty(descriptor, self.entries.iter().map(|e| e.descriptor.as_slice()), self.k)
            .unwrap_or(self.default_novelty)
    }

    /// Strict variant of [`novelty`](Self::novelty) that reports an empty archive.
    pub fn try_novelty(&self, descriptor: &[f64]) -> Result<f64, SelectionError> {
        knn_novelty(descriptor, self.entries.iter().map(|e| e.descriptor.as_slice()), self.k)
            .ok_or(SelectionError::EmptyArchive)
    }

    /// Inserts a candidate; returns whether it was admitted.
    pub fn insert(&mut self, entry: ArchiveEntry) -> bool {
        let rejected = self.entries.iter().any(|e| {
            e.fitness.dominates(&entry.fitness) || (e.fitness == entry.fitness && e.descriptor == entry.descriptor)
        });
        if rejected {
            return false;
        }
        self.entries.retain(|e| !entry.fitness.dominates(&e.fitness));
        self.entries.push(entry);
        while self.entries.len() > self.capacity {
            self.evict_least_novel();
        }
        true
    }

    fn evict_least_novel(&mut self) {
        let mut worst = (0usize, f64::INFINITY);
        for (i, e) in self.entries.iter().enumerate() {
            let others = self.entries.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, o)| o.descriptor.as_slice());
            let nov = knn_novelty(&e.descriptor, others, self.k).unwrap_or(0.0);
            if nov < worst.1 {
                worst = (i, nov);
            }
        }
        self.entries.remove(worst.0);
    }

    /// True when no entry strictly dominates another.
    pub fn is_mutually_nondominated(&self) -> bool {
        self.entries.iter().all(|a| self.entries.iter().all(|b| !a.fitness.dominates(&b.fitness)))
    }
}
