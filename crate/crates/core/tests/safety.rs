use evograph::graph::{ArtefactGraph, ArtefactNode, NodeType};
use evograph::metrics::{NormalizationBounds, RawMetrics, FITNESS_DIM};
use evograph::operators::MergeTensor;
use evograph::safety::{
    drift, gate, risk_estimate, within_budget, GateClauses, GateMeasurements, GateReport, SafetyError, SafetyPolicy,
};
use evograph::simenv::{generate_estate, Environment, EstateSpec, PatchProposal, Shock, TransmuteParams};
use proptest::prelude::*;

/// Environment whose answers are read off graph attributes.
struct Scripted {
    probes: usize,
}

fn num(graph: &ArtefactGraph, key: &str, default: f64) -> f64 {
    graph.num_attribute(key).unwrap_or(default)
}

impl Environment for Scripted {
    fn bounds(&self) -> NormalizationBounds {
        NormalizationBounds::default()
    }
    fn metrics(&self, graph: &ArtefactGraph) -> RawMetrics {
        RawMetrics { u: 0.5, p: num(graph, "latency", 200.0), s: 0.5, b: 0.5, d: 0.5, c: 1.0 }
    }
    fn test_pass_rate(&self, graph: &ArtefactGraph) -> f64 {
        num(graph, "tests", 0.95)
    }
    fn contracts(&self, graph: &ArtefactGraph) -> Vec<bool> {
        vec![num(graph, "contracts", 1.0) > 0.5; 3]
    }
    fn probes(&self, graph: &ArtefactGraph) -> Vec<bool> {
        let flips = num(graph, "flips", 0.0) as usize;
        (0..self.probes).map(|i| i >= flips).collect()
    }
    fn rebuild(&self, _graph: &ArtefactGraph, m: usize, _nonce: u64) -> Vec<String> {
        vec!["h".into(); m]
    }
    fn reward(&self, _graph: &ArtefactGraph) -> f64 {
        0.5
    }
    fn transmute_params(&self, _graph: &ArtefactGraph, _node_id: &str) -> Option<TransmuteParams> {
        None
    }
    fn doc_template(&self, _graph: &ArtefactGraph, _code_id: &str) -> Vec<String> {
        Vec::new()
    }
    fn draft_doc(&self, _graph: &ArtefactGraph, _code_id: &str, _seed: u64) -> Vec<String> {
        Vec::new()
    }
    fn doc_freshness(&self, _graph: &ArtefactGraph, _doc_id: &str, _code_id: &str) -> f64 {
        1.0
    }
    fn propose_patch(&self, _graph: &ArtefactGraph, _node_id: &str, _seed: u64) -> Option<PatchProposal> {
        None
    }
    fn tensor_quality(&self, _tensor: &MergeTensor) -> f64 {
        0.5
    }
    fn apply_shock(&mut self, _shock: &Shock) {}
    fn set_reward_weights(&mut self, _weights: [f64; FITNESS_DIM]) {}
}

fn base() -> ArtefactGraph {
    ArtefactGraph::new(4)
        .add_node(ArtefactNode::new("core", NodeType::Code, 4).locked(true))
        .unwrap()
        .add_node(ArtefactNode::new("edge", NodeType::Code, 4))
        .unwrap()
}

fn policy() -> SafetyPolicy {
    SafetyPolicy { p_max: 300.0, ..SafetyPolicy::default() }
}

fn report(passed: bool) -> GateReport {
    let clauses =
        GateClauses { tests: passed, contracts: true, latency: true, drift: true, locks: true, approval: true };
    GateReport {
        passed,
        clause_results: clauses,
        measured: GateMeasurements { test_rate: 1.0, contracts_ok: true, latency_ms: 1.0, drift: 0.0 },
    }
}

#[test]
fn drift_examples() {
    let env = Scripted { probes: 40 };
    let g = base();
    assert_eq!(drift(&g, &g, &env).unwrap(), 0.0);
    assert_eq!(drift(&g.with_attribute("flips", 2.0), &g, &env).unwrap(), 0.05);
    assert_eq!(drift(&g.with_attribute("flips", 40.0), &g, &env).unwrap(), 1.0);
    assert_eq!(drift(&g, &g, &Scripted { probes: 0 }), Err(SafetyError::NoProbes));
}

#[test]
fn gate_examples() {
    let env = Scripted { probes: 100 };
    let current = base();
    let good = current.with_attribute("tests", 0.95).with_attribute("latency", 200.0).with_attribute("flips", 1.0);
    let r = gate(&good, &current, &policy(), &env, false).unwrap();
    assert!(r.passed);
    assert_eq!(r.measured.drift, 0.01);

    let drifty = good.with_attribute("flips", 6.0);
    let r = gate(&drifty, &current, &policy(), &env, false).unwrap();
    assert!(!r.passed);
    let c = r.clause_results;
    assert!(!c.drift && c.tests && c.contracts && c.latency && c.locks && c.approval);

    let mut core = current.node("core").unwrap().clone();
    core.set_attr("q", 0.9);
    let touched = good.with_node(core).unwrap();
    let r = gate(&touched, &current, &policy(), &env, false).unwrap();
    assert!(!r.passed && !r.clause_results.locks);

    let by_policy = SafetyPolicy { locked_node_ids: ["edge".to_string()].into(), ..policy() };
    let mut edge = current.node("edge").unwrap().clone();
    edge.set_attr("q", 0.1);
    let r = gate(&good.with_node(edge).unwrap(), &current, &by_policy, &env, false).unwrap();
    assert!(!r.clause_results.locks);
}

#[test]
fn approval_clause() {
    let env = Scripted { probes: 10 };
    let g = base();
    let needs = SafetyPolicy { require_approval: true, ..policy() };
    assert!(!gate(&g, &g, &needs, &env, false).unwrap().clause_results.approval);
    assert!(gate(&g, &g, &needs, &env, true).unwrap().passed);
}

#[test]
fn risk_examples() {
    assert_eq!(risk_estimate(&vec![report(true); 50]).unwrap(), 1.0);
    let mut window = vec![report(true); 45];
    window.extend(vec![report(false); 5]);
    assert_eq!(risk_estimate(&window).unwrap(), 0.9);
    assert_eq!(risk_estimate(&[]), Err(SafetyError::EmptyWindow));
    assert!(within_budget(0.9, 0.1 + 1e-12));
    assert!(!within_budget(0.7, 0.2));
}

#[test]
fn policy_validation() {
    assert!(SafetyPolicy { tau_test: 1.2, ..policy() }.validate().is_err());
    assert!(SafetyPolicy { p_max: -1.0, ..policy() }.validate().is_err());
    assert!(SafetyPolicy { risk_window: 0, ..policy() }.validate().is_err());
}

#[test]
fn estate_drift_of_identical_graph_is_zero() {
    for seed in 0..5 {
        let (g, env) = generate_estate(&EstateSpec::default(), seed).unwrap();
        assert_eq!(drift(&g, &g, &env).unwrap(), 0.0);
    }
}

proptest! {
    #[test]
    fn relaxing_a_threshold_keeps_a_pass(
        tests in 0.8..1.0f64,
        latency in 150.0..350.0f64,
        flips in 0usize..8,
        which in 0usize..3,
        slack in 0.0..0.5f64,
    ) {
        let env = Scripted { probes: 100 };
        let current = base();
        let cand = current.with_attribute("tests", tests).with_attribute("latency", latency).with_attribute("flips", flips as f64);
        let strict = policy();
        let loose = match which {
            0 => SafetyPolicy { tau_test: (strict.tau_test - slack).max(0.0), ..strict.clone() },
            1 => SafetyPolicy { p_max: strict.p_max + slack * 100.0, ..strict.clone() },
            _ => SafetyPolicy { epsilon: (strict.epsilon + slack).min(1.0), ..strict.clone() },
        };
        let a = gate(&cand, &current, &strict, &env, false).unwrap();
        let b = gate(&cand, &current, &loose, &env, false).unwrap();
        prop_assert_eq!(a.passed, a.clause_results.all());
        prop_assert_eq!(b.passed, b.clause_results.all());
        if a.passed {
            prop_assert!(b.passed);
        }
    }
}
