use std::collections::BTreeMap;

use rand::Rng;

use crate::graph::{ArtefactGraph, ArtefactNode, Edge, EdgeType, NodeType};
use crate::rng::{derive_seed, seeded_rng};
use crate::simenv::{keys, Environment, TRANSLATION_TARGET};

use super::{MutationOperator, MutationOutcome, OperatorError, OperatorKind};

/// Pass rates `p_0, p_1, …, p_n` of the repair loop, `p_{i+1} = p_i + (1 − p_i)ρ`.
pub fn pass_rate_sequence(p0: f64, rho: f64, iterations: usize) -> Vec<f64> {
    let mut seq = Vec::with_capacity(iterations + 1);
    let mut p = p0;
    seq.push(p);
    for _ in 0..iterations {
        p += (1.0 - p) * rho;
        seq.push(p);
    }
    seq
}

/// Result of running the repair loop to a threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmuteRun {
    /// Iterations used; equals `max_iters` when the threshold was not reached.
    pub iterations: usize,
    pub pass_rate: f64,
    pub reached: bool,
}

/// Iterates the repair loop until the pass rate reaches `threshold` or
/// `max_iters` iterations have run.
pub fn transmute_iterations(
    p0: f64,
    rho: f64,
    threshold: f64,
    max_iters: usize,
) -> Result<TransmuteRun, OperatorError> {
    if p0 >= threshold {
        return Ok(TransmuteRun { iterations: 0, pass_rate: p0, reached: true });
    }
    if rho <= 0.0 {
        return Err(OperatorError::NonPositiveImprovement { p0, rho, threshold });
    }
    let mut p = p0;
    for i in 1..=max_iters {
        p += (1.0 - p) * rho;
        if p >= threshold {
            return Ok(TransmuteRun { iterations: i, pass_rate: p, reached: true });
        }
    }
    Ok(TransmuteRun { iterations: max_iters, pass_rate: p, reached: false })
}

/// Translates one legacy code node: parse, draft, generate tests, then
/// iterate repairs until the generated tests pass at `threshold`.
#[derive(Debug, Clone)]
pub struct Transmute {
    pub threshold: f64,
    pub max_iters: usize,
}

impl MutationOperator for Transmute {
    fn kind(&self) -> OperatorKind {
        OperatorKind::Transmute
    }

    fn apply(&self, graph: &ArtefactGraph, seed: u64, env: &dyn Environment) -> Result<MutationOutcome, OperatorError> {
        let legacy: Vec<&ArtefactNode> = graph
            .nodes_of_type(NodeType::Code)
            .filter(|n| !n.locked && n.str_attr(keys::LEGACY_LANG).is_some())
            .collect();
        if legacy.is_empty() {
            return Err(OperatorError::NoLegacyNodes);
        }
        let mut rng = seeded_rng(derive_seed(seed, &[0]));
        let node = legacy[rng.random_range(0..legacy.len())];
        let params = env.transmute_params(graph, &node.id).ok_or(OperatorError::NoLegacyNodes)?;
        let run = transmute_iterations(params.p0, params.rho, self.threshold, self.max_iters)?;

        let mut record = BTreeMap::from([
            ("p0".to_string(), params.p0),
            ("rho".to_string(), params.rho),
            ("iterations".to_string(), run.iterations as f64),
            ("pass_rate".to_string(), run.pass_rate),
        ]);
        if !run.reached {
            return Ok(MutationOutcome::new(
                OperatorKind::Transmute,
                false,
                graph.clone(),
                0.0,
                Some(node.id.clone()),
                record,
            ));
        }

        let mut translated = node.clone();
        translated.attributes.remove(keys::LEGACY_LANG);
        translated.set_attr(keys::LANG, TRANSLATION_TARGET);
        translated.set_attr(keys::EQUIV, run.pass_rate);
        let q_perf = translated.num(keys::Q_PERF).unwrap_or(0.0);
        translated.set_attr(keys::Q_PERF, (q_perf + 0.1).min(1.0));

        let mut out = graph.clone();
        out.replace_node(translated)?;
        let test_id = format!("{}.tests", node.id);
        if !out.contains(&test_id) {
            let test = ArtefactNode::new(test_id.clone(), NodeType::Test, graph.dim())
                .with_attr(keys::PASS_RATE, run.pass_rate);
            out.insert_node(test)?;
            out.insert_edge(Edge::new(test_id, node.id.clone(), EdgeType::DerivedFrom))?;
        }
        record.insert("q_perf_before".to_string(), q_perf);
        Ok(MutationOutcome::new(OperatorKind::Transmute, true, out, 1.0, Some(node.id.clone()), record))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_already_met() {
        let run = transmute_iterations(0.93, 0.0, 0.93, 10).unwrap();
        assert_eq!(run.iterations, 0);
        assert!(run.reached);
    }

    #[test]
    fn half_and_half_takes_three_steps() {
        assert_eq!(pass_rate_sequence(0.5, 0.5, 3), vec![0.5, 0.75, 0.875, 0.9375]);
        let run = transmute_iterations(0.5, 0.5, 0.93, 10).unwrap();
        assert_eq!(run.iterations, 3);
        assert_eq!(run.pass_rate, 0.9375);
    }

    #[test]
    fn zero_improvement_is_an_error() {
        assert!(matches!(transmute_iterations(0.5, 0.0, 0.93, 10), Err(OperatorError::NonPositiveImprovement { .. })));
    }

    #[test]
    fn budget_exhausted_rejects() {
        let run = transmute_iterations(0.1, 0.05, 0.93, 3).unwrap();
        assert!(!run.reached);
        assert_eq!(run.iterations, 3);
    }
}
