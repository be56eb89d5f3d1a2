use std::collections::BTreeMap;

use rand::Rng;

use crate::graph::{ArtefactGraph, EdgeType, NodeType, ATTR_TEXT};
use crate::rng::{derive_seed, seeded_rng};
use crate::simenv::Environment;

use super::{MutationOperator, MutationOutcome, OperatorError, OperatorKind};

/// Regenerates one doc from the code it documents. The new text is kept
/// when its freshness reaches `tau_d` and does not fall below the old one.
#[derive(Debug, Clone)]
pub struct DocSync {
    pub tau_d: f64,
}

/// `(doc, code)` pairs linked by a `documents` edge from doc to code.
pub(crate) fn doc_pairs(graph: &ArtefactGraph) -> Vec<(&str, &str)> {
    graph
        .edges_of_kind(EdgeType::Documents)
        .filter(|e| {
            graph.node(&e.src).is_some_and(|n| n.node_type == NodeType::Doc)
                && graph.node(&e.dst).is_some_and(|n| n.node_type == NodeType::Code)
        })
        .map(|e| (e.src.as_str(), e.dst.as_str()))
        .collect()
}

impl MutationOperator for DocSync {
    fn kind(&self) -> OperatorKind {
        OperatorKind::DocSync
    }

    fn apply(&self, graph: &ArtefactGraph, seed: u64, env: &dyn Environment) -> Result<MutationOutcome, OperatorError> {
        let pairs: Vec<(&str, &str)> =
            doc_pairs(graph).into_iter().filter(|(doc, _)| graph.node(doc).is_some_and(|n| !n.locked)).collect();
        if pairs.is_empty() {
            return Err(OperatorError::NoDocPairs);
        }
        let mut rng = seeded_rng(derive_seed(seed, &[0]));
        let (doc_id, code_id) = pairs[rng.random_range(0..pairs.len())];
        let old = env.doc_freshness(graph, doc_id, code_id);
        let tokens = env.draft_doc(graph, code_id, derive_seed(seed, &[1]));

        let mut doc = graph.node(doc_id).cloned().ok_or(OperatorError::NoDocPairs)?;
        doc.set_attr(ATTR_TEXT, tokens.join(" "));
        let candidate = graph.with_node(doc)?;
        let new = env.doc_freshness(&candidate, doc_id, code_id);
        let accepted = new >= self.tau_d && new >= old;
        let params = BTreeMap::from([("freshness_before".to_string(), old), ("freshness_after".to_string(), new)]);
        let out = if accepted { candidate } else { graph.clone() };
        Ok(MutationOutcome::new(
            OperatorKind::DocSync,
            accepted,
            out,
            if accepted { 1.0 } else { 0.0 },
            Some(doc_id.to_string()),
            params,
        ))
    }
}
