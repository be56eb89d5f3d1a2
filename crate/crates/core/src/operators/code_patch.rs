use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{ArtefactGraph, NodeType};
use crate::rng::{derive_seed, seeded_rng};
use crate::simenv::Environment;

use super::{MutationOperator, MutationOutcome, OperatorError, OperatorKind};

/// Bias, compile flag, static-finding delta, size penalty.
pub const DEFAULT_THETA: [f64; 4] = [-3.0, 5.0, 0.5, 1.0];

/// Critic signals for a drafted patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchFeatures {
    /// 1 when the patched unit compiles, else 0.
    pub compile_ok: f64,
    /// Signed number of static-analysis findings removed.
    pub static_delta: f64,
    /// Edit-script length / 100.
    pub size_penalty: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `σ(θ · [1, compile_ok, static_delta, −size_penalty])`.
pub fn patch_acceptance(features: &PatchFeatures, theta: &[f64; 4]) -> f64 {
    let x = [1.0, features.compile_ok, features.static_delta, -features.size_penalty];
    sigmoid(theta.iter().zip(x).map(|(t, v)| t * v).sum())
}

/// Profile weight of a code node; patch targets are drawn in proportion to it.
pub const ATTR_HOT: &str = "hot";

/// Drafts a patch to one unlocked code node and keeps it with the logistic
/// acceptance probability.
#[derive(Debug, Clone)]
pub struct CodePatch {
    pub theta: [f64; 4],
}

impl MutationOperator for CodePatch {
    fn kind(&self) -> OperatorKind {
        OperatorKind::CodePatch
    }

    fn apply(&self, graph: &ArtefactGraph, seed: u64, env: &dyn Environment) -> Result<MutationOutcome, OperatorError> {
        let targets: Vec<(&str, f64)> = graph
            .nodes_of_type(NodeType::Code)
            .filter(|n| !n.locked)
            .map(|n| (n.id.as_str(), n.num(ATTR_HOT).unwrap_or(1.0).max(0.0)))
            .collect();
        if targets.is_empty() {
            return Err(OperatorError::NoCodeNodes);
        }
        let mut rng = seeded_rng(derive_seed(seed, &[0]));
        let target = match WeightedIndex::new(targets.iter().map(|t| t.1)) {
            Ok(dist) => targets[dist.sample(&mut rng)].0,
            Err(_) => targets[rng.random_range(0..targets.len())].0,
        };
        let Some(proposal) = env.propose_patch(graph, target, derive_seed(seed, &[1])) else {
            return Err(OperatorError::NoCodeNodes);
        };
        let probability = patch_acceptance(&proposal.features, &self.theta);
        let accepted = rng.random::<f64>() < probability;
        let params = BTreeMap::from([
            ("compile_ok".to_string(), proposal.features.compile_ok),
            ("static_delta".to_string(), proposal.features.static_delta),
            ("size_penalty".to_string(), proposal.features.size_penalty),
        ]);
        let out = if accepted { graph.with_node(proposal.node)? } else { graph.clone() };
        Ok(MutationOutcome::new(OperatorKind::CodePatch, accepted, out, probability, Some(target.to_string()), params))
    }
}
