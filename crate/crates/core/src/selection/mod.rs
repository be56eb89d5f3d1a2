//! Pareto-plus-novelty survivor selection and the quality-diversity archive.

mod archive;
mod novelty;
mod pareto;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::FitnessVector;
use crate::rng::seeded_rng;

pub use archive::{ArchiveEntry, QdArchive, DEFAULT_CAPACITY, DEFAULT_K, DEFAULT_NOVELTY};
pub use novelty::{distance, knn_novelty};
pub use pareto::pareto_ranks;

pub const DEFAULT_BETA_NOV: f64 = 0.1;
pub const DEFAULT_ALPHA_SEL: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("vector {index} has {found} components, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, found: usize },
    #[error("archive is empty")]
    EmptyArchive,
    #[error("ranks and novelties differ in length ({ranks} vs {novelties})")]
    LengthMismatch { ranks: usize, novelties: usize },
    #[error("pool of {pool} candidates cannot supply {n} survivors")]
    PoolTooSmall { pool: usize, n: usize },
    #[error("selection parameters must be finite and non-negative (alpha_sel {alpha_sel}, beta_nov {beta_nov})")]
    InvalidParams { alpha_sel: f64, beta_nov: f64 },
    #[error("archive capacity ({capacity}) and k ({k}) must be positive")]
    InvalidArchiveParams { capacity: usize, k: usize },
}

/// Weights of rank pressure and novelty in the selection logits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub alpha_sel: f64,
    pub beta_nov: f64,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self { alpha_sel: DEFAULT_ALPHA_SEL, beta_nov: DEFAULT_BETA_NOV }
    }
}

impl SelectionParams {
    pub fn validate(&self) -> Result<(), SelectionError> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if ok(self.alpha_sel) && ok(self.beta_nov) {
            Ok(())
        } else {
            Err(SelectionError::InvalidParams { alpha_sel: self.alpha_sel, beta_nov: self.beta_nov })
        }
    }
}

/// `1 / (1 + rank)`: 1 for the first front, decaying after.
pub fn inv_rank(rank: usize) -> f64 {
    1.0 / (1.0 + rank as f64)
}

/// Softmax of `alpha_sel · inv_rank + beta_nov · novelty`.
pub fn selection_probabilities(
    ranks: &[usize],
    novelties: &[f64],
    params: &SelectionParams,
) -> Result<Vec<f64>, SelectionError> {
    if ranks.len() != novelties.len() {
        return Err(SelectionError::LengthMismatch { ranks: ranks.len(), novelties: novelties.len() });
    }
    params.validate()?;
    let logits: Vec<f64> =
        ranks.iter().zip(novelties).map(|(&r, &nov)| params.alpha_sel * inv_rank(r) + params.beta_nov * nov).collect();
    Ok(softmax(&logits))
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Draws `n` distinct indices, each draw proportional to the remaining
/// weights.
pub fn sample_without_replacement<R: Rng>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let mut remaining: Vec<(usize, f64)> = weights.iter().copied().enumerate().collect();
    let mut picked = Vec::with_capacity(n);
    for _ in 0..n.min(weights.len()) {
        let total: f64 = remaining.iter().map(|(_, w)| w).sum();
        let mut target = rng.random::<f64>() * total;
        let mut choice = remaining.len() - 1;
        for (pos, (_, w)) in remaining.iter().enumerate() {
            if target < *w {
                choice = pos;
                break;
            }
            target -= w;
        }
        picked.push(remaining.remove(choice).0);
    }
    picked
}

/// A candidate offered to selection.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolMember {
    pub id: String,
    pub fitness: FitnessVector,
    pub descriptor: Vec<f64>,
}

/// Outcome of one quality-diversity selection step.
#[derive(Debug, Clone)]
pub struct Selection {
    /// Pool indices of the survivors, in draw order.
    pub survivors: Vec<usize>,
    pub ranks: Vec<usize>,
    pub novelties: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub archive: QdArchive,
}

/// Selects `n` survivors from the pool and folds the pool into the archive.
///
/// Novelty is measured against the archive as it stood before this step.
pub fn select_qd(
    pool: &[PoolMember],
    n: usize,
    params: &SelectionParams,
    archive: &QdArchive,
    seed: u64,
) -> Result<Selection, SelectionError> {
    if pool.len() < n {
        return Err(SelectionError::PoolTooSmall { pool: pool.len(), n });
    }
    let fitness: Vec<&[f64]> = pool.iter().map(|m| &m.fitness.0[..]).collect();
    let ranks = pareto_ranks(&fitness)?;
    let novelties: Vec<f64> = pool.iter().map(|m| archive.novelty(&m.descriptor)).collect();
    let probabilities = selection_probabilities(&ranks, &novelties, params)?;
    let survivors = if n == pool.len() {
        (0..n).collect()
    } else {
        sample_without_replacement(&probabilities, n, &mut seeded_rng(seed))
    };
    let mut next = archive.clone();
    for m in pool {
        next.insert(ArchiveEntry { graph_id: m.id.clone(), fitness: m.fitness, descriptor: m.descriptor.clone() });
    }
    Ok(Selection { survivors, ranks, novelties, probabilities, archive: next })
}
