//! Synthetic legacy estate.
//!
//! The environment stands in for every live system the loop would normally
//! consult: latency replay, test and contract runs, behavioral probes,
//! rebuild hashing, doc generation, patch drafting and the post-rollout KPI.
//! All answers are pure functions of the estate seed, the graph content and
//! the query arguments.

mod estate;
mod latent;

use serde::{Deserialize, Serialize};

use crate::graph::{ArtefactGraph, ArtefactNode};
use crate::metrics::{fitness_vector, FitnessVector, NormalizationBounds, RawMetrics, FITNESS_DIM};
use crate::operators::{MergeTensor, PatchFeatures};

pub use estate::{generate_estate, EstatePreset, EstateSpec, SimEnvError, TRANSLATION_TARGET};
pub use latent::EstateEnv;

/// Attribute keys understood by the latent model.
pub mod keys {
    pub const Q_FUNC: &str = "q_func";
    pub const Q_PERF: &str = "q_perf";
    pub const Q_SEC: &str = "q_sec";
    pub const HOT: &str = "hot";
    pub const REVISION: &str = "revision";
    pub const LANG: &str = "lang";
    pub const LEGACY_LANG: &str = "legacy_lang";
    pub const BUILDS_OK: &str = "builds_ok";
    pub const EQUIV: &str = "equiv";
    pub const TOOLCHAIN: &str = "toolchain";
    pub const DEPS: &str = "deps";
    pub const FLAG_PREFIX: &str = "flag.";
    pub const FLAG_TIMESTAMPS: &str = "flag.timestamps";
    pub const PASS_RATE: &str = "pass_rate";
}

/// A drafted code patch: the patched node plus the critic's features.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchProposal {
    pub node: ArtefactNode,
    pub features: PatchFeatures,
}

/// Starting pass rate and per-iteration improvement for a translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmuteParams {
    pub p0: f64,
    pub rho: f64,
}

/// Exogenous change applied at a generation boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shock", rename_all = "snake_case")]
pub enum Shock {
    /// Multiplies every subsequent p95 latency by `factor`.
    LatencySpike { factor: f64 },
    /// Replaces the base per-rebuild divergence probability.
    Flakiness { probability: f64 },
}

pub trait Environment: Send + Sync {
    /// Latency bounds used to normalize `P`.
    fn bounds(&self) -> NormalizationBounds;

    fn metrics(&self, graph: &ArtefactGraph) -> RawMetrics;

    fn fitness(&self, graph: &ArtefactGraph) -> FitnessVector {
        fitness_vector(&self.metrics(graph), &self.bounds())
    }

    /// Fraction of the test suite passing.
    fn test_pass_rate(&self, graph: &ArtefactGraph) -> f64;

    /// Interface contract checks, one boolean per contract.
    fn contracts(&self, graph: &ArtefactGraph) -> Vec<bool>;

    /// Behavioral probe outcomes; the drift measure compares these.
    fn probes(&self, graph: &ArtefactGraph) -> Vec<bool>;

    /// Hashes of `m` simulated rebuilds. `nonce` selects an independent
    /// batch of rebuilds for the same graph.
    fn rebuild(&self, graph: &ArtefactGraph, m: usize, nonce: u64) -> Vec<String>;

    /// Post-rollout KPI in `[0, 1]`.
    fn reward(&self, graph: &ArtefactGraph) -> f64;

    fn transmute_params(&self, graph: &ArtefactGraph, node_id: &str) -> Option<TransmuteParams>;

    /// Reference documentation tokens for a code node's current state.
    fn doc_template(&self, graph: &ArtefactGraph, code_id: &str) -> Vec<String>;

    /// Generated documentation for a code node (may be imperfect).
    fn draft_doc(&self, graph: &ArtefactGraph, code_id: &str, seed: u64) -> Vec<String>;

    /// Freshness of a doc node against the code node it documents.
    fn doc_freshness(&self, graph: &ArtefactGraph, doc_id: &str, code_id: &str) -> f64;

    /// Draft and critic response for a patch to `node_id`.
    fn propose_patch(&self, graph: &ArtefactGraph, node_id: &str, seed: u64) -> Option<PatchProposal>;

    /// Critic score of an operator-model tensor in `[0, 1]`.
    fn tensor_quality(&self, tensor: &MergeTensor) -> f64;

    fn apply_shock(&mut self, shock: &Shock);

    fn set_reward_weights(&mut self, weights: [f64; FITNESS_DIM]);
}
