use serde::{Deserialize, Serialize};

use super::{ArtefactGraph, NodeType, ATTR_LATENCY_NORM, ATTR_REPRO};

pub const DESCRIPTOR_LEN: usize = 14;

/// Behavior summary used for novelty distances: node-type histogram plus a
/// (normalized latency, reproducibility) performance signature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorDescriptor {
    pub type_histogram: [f64; 12],
    pub perf_signature: [f64; 2],
}

impl BehaviorDescriptor {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(DESCRIPTOR_LEN);
        v.extend_from_slice(&self.type_histogram);
        v.extend_from_slice(&self.perf_signature);
        v
    }

    /// Builds a descriptor from a flat 14-vector.
    pub fn from_slice(values: &[f64]) -> Option<Self> {
        if values.len() != DESCRIPTOR_LEN {
            return None;
        }
        let mut type_histogram = [0.0; 12];
        type_histogram.copy_from_slice(&values[..12]);
        Some(Self { type_histogram, perf_signature: [values[12], values[13]] })
    }
}

pub fn descriptor(graph: &ArtefactGraph) -> BehaviorDescriptor {
    let mut counts = [0usize; 12];
    for node in graph.nodes() {
        counts[node.node_type.index()] += 1;
    }
    let total = graph.node_count();
    let mut type_histogram = [0.0; 12];
    if total > 0 {
        for t in NodeType::ALL {
            type_histogram[t.index()] = counts[t.index()] as f64 / total as f64;
        }
    }
    let perf_signature =
        [graph.num_attribute(ATTR_LATENCY_NORM).unwrap_or(0.0), graph.num_attribute(ATTR_REPRO).unwrap_or(0.0)];
    BehaviorDescriptor { type_histogram, perf_signature }
}
