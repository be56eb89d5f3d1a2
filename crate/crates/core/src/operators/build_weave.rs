use std::collections::BTreeMap;

use rand::Rng;

use crate::graph::{ArtefactGraph, AttrValue, Edge, EdgeType, NodeType, ATTR_REPRO};
use crate::metrics::reproducibility;
use crate::rng::{derive_seed, seeded_rng};
use crate::simenv::{keys, Environment};

use super::{MutationOperator, MutationOutcome, OperatorError, OperatorKind};

const FLAGS: [&str; 4] = ["flag.lto", "flag.pgo", "flag.timestamps", "flag.static"];

/// Mutates one build node (flag toggle, new dependency or toolchain upgrade),
/// rebuilds `rebuilds` times and keeps the change if reproducibility does not
/// drop.
#[derive(Debug, Clone)]
pub struct BuildWeave {
    pub rebuilds: usize,
}

impl MutationOperator for BuildWeave {
    fn kind(&self) -> OperatorKind {
        OperatorKind::BuildWeave
    }

    fn apply(&self, graph: &ArtefactGraph, seed: u64, env: &dyn Environment) -> Result<MutationOutcome, OperatorError> {
        let builds: Vec<&str> =
            graph.nodes_of_type(NodeType::Build).filter(|n| !n.locked).map(|n| n.id.as_str()).collect();
        if builds.is_empty() {
            return Err(OperatorError::NoBuildNodes);
        }
        let mut rng = seeded_rng(derive_seed(seed, &[0]));
        let target = builds[rng.random_range(0..builds.len())];
        let mut node = graph.node(target).cloned().ok_or(OperatorError::NoBuildNodes)?;
        let mut params = BTreeMap::new();
        let mut candidate = graph.clone();

        match rng.random_range(0..3u8) {
            0 => {
                let flag = FLAGS[rng.random_range(0..FLAGS.len())];
                let on = node.flag(flag).unwrap_or(false);
                node.set_attr(flag, !on);
                params.insert("toggled_flag".to_string(), (FLAGS.iter().position(|f| *f == flag).unwrap()) as f64);
            }
            1 => {
                let deps = node.num(keys::DEPS).unwrap_or(0.0) + 1.0;
                node.set_attr(keys::DEPS, deps);
                let providers: Vec<&str> = graph
                    .nodes()
                    .filter(|n| matches!(n.node_type, NodeType::Data | NodeType::Schema) && n.id != target)
                    .filter(|n| !graph.has_edge(target, &n.id, EdgeType::DependsOn))
                    .map(|n| n.id.as_str())
                    .collect();
                if !providers.is_empty() {
                    let dep = providers[rng.random_range(0..providers.len())];
                    candidate.insert_edge(Edge::new(target, dep, EdgeType::DependsOn))?;
                }
                params.insert("deps".to_string(), deps);
            }
            _ => {
                let toolchain = node.num(keys::TOOLCHAIN).unwrap_or(1.0) + 1.0;
                node.set_attr(keys::TOOLCHAIN, toolchain);
                params.insert("toolchain".to_string(), toolchain);
            }
        }
        candidate.replace_node(node)?;

        let hashes = env.rebuild(&candidate, self.rebuilds, derive_seed(seed, &[1]));
        let repro = reproducibility(&hashes)?;
        let previous = graph.num_attribute(ATTR_REPRO).unwrap_or(0.0);
        let accepted = repro >= previous;
        params.insert("repro".to_string(), repro);
        params.insert("repro_before".to_string(), previous);
        let out = if accepted {
            candidate.set_attribute(ATTR_REPRO.to_string(), AttrValue::Num(repro));
            candidate
        } else {
            graph.clone()
        };
        Ok(MutationOutcome::new(
            OperatorKind::BuildWeave,
            accepted,
            out,
            if accepted { 1.0 } else { 0.0 },
            Some(target.to_string()),
            params,
        ))
    }
}
