use evograph::graph::{ArtefactGraph, ArtefactNode, NodeType, ATTR_REPRO, ATTR_TEXT};
use evograph::metrics::{FitnessVector, NormalizationBounds, RawMetrics, FITNESS_DIM};
use evograph::operators::{
    align, draw_ops_once, merge_with_lambda, pass_rate_sequence, sample_beta, sample_ops, transmute_iterations,
    weight_merge, BuildWeave, CodePatch, DocSync, MergeTensor, MutationOperator, OperatorConfig, OperatorError,
    OperatorKind, Transmute, DEFAULT_THETA,
};
use evograph::rng::seeded_rng;
use evograph::simenv::{
    generate_estate, Environment, EstateEnv, EstatePreset, EstateSpec, PatchProposal, Shock, TransmuteParams,
};
use proptest::prelude::*;
use rand::Rng;

fn tensor(rows: &[&[f64]]) -> MergeTensor {
    MergeTensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn random_tensor(rng: &mut impl Rng, rows: usize, cols: usize) -> MergeTensor {
    MergeTensor::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn sorted_rows(t: &MergeTensor) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = (0..t.shape().0).map(|i| t.row(i).to_vec()).collect();
    rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
    rows
}

#[test]
fn merge_endpoints_and_hand_example() {
    let mut rng = seeded_rng(1);
    for _ in 0..50 {
        let a = random_tensor(&mut rng, 4, 3);
        let b = random_tensor(&mut rng, 4, 3);
        assert_eq!(merge_with_lambda(&a, &b, 1.0).unwrap(), a);
        let (aligned, _) = align(&b, &a).unwrap();
        assert_eq!(merge_with_lambda(&a, &b, 0.0).unwrap(), aligned);
    }
    let ident = tensor(&[&[1.0, 0.0], &[0.0, 1.0]]);
    let zero = MergeTensor::zeros(2, 2);
    assert_eq!(merge_with_lambda(&ident, &zero, 0.5).unwrap(), tensor(&[&[0.5, 0.0], &[0.0, 0.5]]));
    assert!(matches!(
        weight_merge(&ident, &MergeTensor::zeros(3, 2), 2.0, 0),
        Err(OperatorError::ShapeMismatch { .. })
    ));
    assert!(matches!(weight_merge(&ident, &zero, 0.0, 0), Err(OperatorError::InvalidAlpha(_))));
}

#[test]
fn align_examples() {
    let a = tensor(&[&[1.0, 0.0], &[0.0, 1.0]]);
    let (same, perm) = align(&a, &a).unwrap();
    assert_eq!((same, perm), (a.clone(), vec![0, 1]));

    let swapped = tensor(&[&[0.0, 1.0], &[1.0, 0.0]]);
    let (fixed, perm) = align(&swapped, &a).unwrap();
    assert_eq!(perm, vec![1, 0]);
    assert_eq!(fixed, a);

    let zero = MergeTensor::zeros(2, 2);
    assert_eq!(align(&zero, &a).unwrap().0, zero);
}

#[test]
fn align_never_loses_to_unaligned() {
    let mut rng = seeded_rng(2024);
    for _ in 0..500 {
        let rows = rng.random_range(1..=8);
        let cols = rng.random_range(1..=8);
        let a = random_tensor(&mut rng, rows, cols);
        let b = random_tensor(&mut rng, rows, cols);
        let (aligned, _) = align(&b, &a).unwrap();
        assert!(aligned.frobenius_distance(&a) <= b.frobenius_distance(&a) + 1e-12);
        assert_eq!(sorted_rows(&aligned), sorted_rows(&b));
    }
}

#[test]
fn align_matches_exhaustive_optimum() {
    let mut rng = seeded_rng(77);
    for _ in 0..300 {
        let rows = rng.random_range(1..=4);
        let cols = rng.random_range(1..=4);
        let a = random_tensor(&mut rng, rows, cols);
        let b = random_tensor(&mut rng, rows, cols);
        let best =
            permutations(rows).iter().map(|p| b.permute_rows(p).frobenius_distance(&a)).fold(f64::INFINITY, f64::min);
        let (aligned, _) = align(&b, &a).unwrap();
        assert!((aligned.frobenius_distance(&a) - best).abs() <= 1e-12);
    }
}

#[test]
fn beta_moments() {
    for alpha in [0.5, 2.0, 5.0] {
        let mut rng = seeded_rng(9);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_beta(alpha, &mut rng).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expected = 1.0 / (8.0 * alpha + 4.0);
        assert!((mean - 0.5).abs() <= 0.01, "alpha {alpha}: mean {mean}");
        assert!((var - expected).abs() <= 0.1 * expected, "alpha {alpha}: var {var} vs {expected}");
    }
}

#[test]
fn transmute_examples() {
    assert_eq!(transmute_iterations(0.93, 0.5, 0.93, 10).unwrap().iterations, 0);
    let run = transmute_iterations(0.5, 0.5, 0.93, 10).unwrap();
    assert_eq!(run.iterations, 3);
    assert!(run.reached);
    assert_eq!(pass_rate_sequence(0.5, 0.5, 3), vec![0.5, 0.75, 0.875, 0.9375]);
    assert!(matches!(transmute_iterations(0.5, 0.0, 0.93, 10), Err(OperatorError::NonPositiveImprovement { .. })));
}

#[test]
fn transmute_sequences_are_monotone() {
    let mut rng = seeded_rng(5);
    for _ in 0..1000 {
        let p0 = rng.random::<f64>();
        let rho = rng.random::<f64>();
        let seq = pass_rate_sequence(p0, rho, 20);
        assert!(seq.windows(2).all(|w| w[0] <= w[1] && w[1] <= 1.0), "{p0} {rho}");
    }
}

#[test]
fn sample_ops_examples() {
    let all = OperatorKind::ALL.to_vec();
    assert_eq!(sample_ops(3, &all, 1.0).unwrap(), all);
    assert_eq!(sample_ops(3, &[], 0.3), Err(OperatorError::AllOperatorsDisabled));
    assert!(matches!(sample_ops(3, &all, 1.5), Err(OperatorError::InvalidMutationRate(_))));
    for seed in 0..200 {
        let ops = sample_ops(seed, &all[1..3], 0.3).unwrap();
        assert!(!ops.is_empty() && ops.iter().all(|k| all[1..3].contains(k)));
    }
}

#[test]
fn inclusion_frequency_matches_rate() {
    let all = OperatorKind::ALL.to_vec();
    let mut rng = seeded_rng(31);
    let trials = 10_000;
    let mut counts = [0usize; 5];
    for _ in 0..trials {
        for k in draw_ops_once(&mut rng, &all, 0.3) {
            counts[k.index()] += 1;
        }
    }
    for c in counts {
        let freq = c as f64 / trials as f64;
        assert!((freq - 0.3).abs() <= 0.02, "{freq}");
    }
}

fn small_estate(spec: EstateSpec) -> (ArtefactGraph, EstateEnv) {
    generate_estate(&spec, 42).unwrap()
}

/// Delegates to an estate but reports scripted rebuild hashes.
struct ScriptedBuilds {
    inner: EstateEnv,
    hashes: Vec<String>,
}

impl Environment for ScriptedBuilds {
    fn bounds(&self) -> NormalizationBounds {
        self.inner.bounds()
    }
    fn metrics(&self, graph: &ArtefactGraph) -> RawMetrics {
        self.inner.metrics(graph)
    }
    fn test_pass_rate(&self, graph: &ArtefactGraph) -> f64 {
        self.inner.test_pass_rate(graph)
    }
    fn contracts(&self, graph: &ArtefactGraph) -> Vec<bool> {
        self.inner.contracts(graph)
    }
    fn probes(&self, graph: &ArtefactGraph) -> Vec<bool> {
        self.inner.probes(graph)
    }
    fn rebuild(&self, _graph: &ArtefactGraph, _m: usize, _nonce: u64) -> Vec<String> {
        self.hashes.clone()
    }
    fn reward(&self, graph: &ArtefactGraph) -> f64 {
        self.inner.reward(graph)
    }
    fn transmute_params(&self, graph: &ArtefactGraph, node_id: &str) -> Option<TransmuteParams> {
        self.inner.transmute_params(graph, node_id)
    }
    fn doc_template(&self, graph: &ArtefactGraph, code_id: &str) -> Vec<String> {
        self.inner.doc_template(graph, code_id)
    }
    fn draft_doc(&self, graph: &ArtefactGraph, code_id: &str, seed: u64) -> Vec<String> {
        self.inner.draft_doc(graph, code_id, seed)
    }
    fn doc_freshness(&self, graph: &ArtefactGraph, doc_id: &str, code_id: &str) -> f64 {
        self.inner.doc_freshness(graph, doc_id, code_id)
    }
    fn propose_patch(&self, graph: &ArtefactGraph, node_id: &str, seed: u64) -> Option<PatchProposal> {
        self.inner.propose_patch(graph, node_id, seed)
    }
    fn tensor_quality(&self, tensor: &MergeTensor) -> f64 {
        self.inner.tensor_quality(tensor)
    }
    fn apply_shock(&mut self, shock: &Shock) {
        self.inner.apply_shock(shock)
    }
    fn set_reward_weights(&mut self, weights: [f64; FITNESS_DIM]) {
        self.inner.set_reward_weights(weights)
    }
}

#[test]
fn build_weave_examples() {
    let (g, env) = small_estate(EstatePreset::Minimal.spec());
    let op = BuildWeave { rebuilds: 4 };
    let steady = ScriptedBuilds { inner: env, hashes: vec!["h".to_string(); 4] };
    for seed in 0..20 {
        let out = op.apply(&g, seed, &steady).unwrap();
        assert!(out.accepted);
        assert_eq!(out.graph.num_attribute(ATTR_REPRO), Some(1.0));
    }

    let flaky = ScriptedBuilds { hashes: ["h", "h", "h", "g"].map(String::from).to_vec(), ..steady };
    let base = g.with_attribute(ATTR_REPRO, 0.5);
    let out = op.apply(&base, 1, &flaky).unwrap();
    assert!(out.accepted);
    assert_eq!(out.record.params["repro"], 0.75);
    assert_eq!(out.graph.num_attribute(ATTR_REPRO), Some(0.75));
    let worse = op.apply(&g.with_attribute(ATTR_REPRO, 1.0), 1, &flaky).unwrap();
    assert!(!worse.accepted);

    let bare = ArtefactGraph::new(16).add_node(ArtefactNode::new("c", NodeType::Code, 16)).unwrap();
    assert_eq!(op.apply(&bare, 0, &flaky.inner).unwrap_err(), OperatorError::NoBuildNodes);
}

#[test]
fn doc_sync_examples() {
    let spec = EstateSpec {
        counts: [(NodeType::Code, 1), (NodeType::Doc, 1)].into(),
        draft_drop: 0.0,
        ..EstatePreset::Minimal.spec()
    };
    let (g, env) = small_estate(spec);
    let mut doc = g.nodes_of_type(NodeType::Doc).next().unwrap().clone();
    doc.set_attr(ATTR_TEXT, "legacy notes describing an old interface");
    let stale = g.with_node(doc.clone()).unwrap();
    let op = DocSync { tau_d: 0.8 };
    let synced = op.apply(&stale, 3, &env).unwrap();
    assert!(synced.accepted);
    assert!(synced.record.params["freshness_before"] < 0.8);
    assert!(synced.record.params["freshness_after"] > 0.8);

    let again = op.apply(&synced.graph, 4, &env).unwrap();
    assert!(again.accepted);
    assert!((again.record.params["freshness_after"] - 1.0).abs() < 1e-12);
    assert!(again.graph.same_content(&synced.graph));
    assert_eq!(again.graph.lineage().len(), synced.graph.lineage().len());

    let bare = ArtefactGraph::new(16).add_node(ArtefactNode::new("d", NodeType::Doc, 16)).unwrap();
    assert_eq!(op.apply(&bare, 0, &env).unwrap_err(), OperatorError::NoDocPairs);
}

#[test]
fn code_patch_examples() {
    let (g, env) = small_estate(EstatePreset::Minimal.spec());
    let sure = CodePatch { theta: [100.0, 0.0, 0.0, 0.0] };
    for seed in 0..30 {
        assert!(sure.apply(&g, seed, &env).unwrap().accepted);
    }
    let op = CodePatch { theta: DEFAULT_THETA };
    assert_eq!(op.apply(&g, 8, &env).unwrap(), op.apply(&g, 8, &env).unwrap());

    let bare = ArtefactGraph::new(16).add_node(ArtefactNode::new("d", NodeType::Doc, 16)).unwrap();
    assert_eq!(op.apply(&bare, 0, &env).unwrap_err(), OperatorError::NoCodeNodes);
}

#[test]
fn transmute_operator_translates_legacy_code() {
    let spec = EstateSpec { legacy_fraction: 1.0, p0: [0.5, 0.5], rho: [0.5, 0.5], ..EstatePreset::Minimal.spec() };
    let (g, env) = small_estate(spec);
    let op = Transmute { threshold: 0.93, max_iters: 10 };
    let out = op.apply(&g, 4, &env).unwrap();
    assert!(out.accepted);
    assert_eq!(out.record.params["iterations"], 3.0);

    let (modern, env) = small_estate(EstateSpec { legacy_fraction: 0.0, ..EstatePreset::Minimal.spec() });
    assert_eq!(op.apply(&modern, 0, &env).unwrap_err(), OperatorError::NoLegacyNodes);
}

#[test]
fn operators_are_deterministic_and_rejections_keep_content() {
    let (g, env) = generate_estate(&EstateSpec::default(), 7).unwrap();
    let config = OperatorConfig::default();
    let mut rejected = 0;
    for kind in OperatorKind::ALL {
        let op = config.build(kind);
        for seed in 0..25 {
            let a = op.apply(&g, seed, &env).unwrap();
            let b = op.apply(&g, seed, &env).unwrap();
            assert_eq!(a, b, "{kind} seed {seed}");
            if !a.accepted {
                rejected += 1;
                assert!(a.graph.same_content(&g), "{kind} seed {seed}");
            }
        }
    }
    assert!(rejected > 0);
}

proptest! {
    #[test]
    fn merge_is_elementwise_convex(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..6) {
        let mut rng = seeded_rng(seed);
        let a = random_tensor(&mut rng, rows, cols);
        let b = random_tensor(&mut rng, rows, cols);
        let (merged, lambda) = weight_merge(&a, &b, 2.0, seed).unwrap();
        prop_assert!((0.0..=1.0).contains(&lambda));
        let (aligned, _) = align(&b, &a).unwrap();
        for ((m, x), y) in merged.data().iter().zip(a.data()).zip(aligned.data()) {
            prop_assert!(*m >= x.min(*y) - 1e-12 && *m <= x.max(*y) + 1e-12);
        }
    }

    #[test]
    fn fitness_of_estates_is_in_unit_box(seed in 0u64..50) {
        let (g, env) = small_estate_seeded(seed);
        let f: FitnessVector = env.fitness(&g);
        prop_assert!(f.0.iter().all(|x| (0.0..=1.0).contains(x)));
    }
}

fn small_estate_seeded(seed: u64) -> (ArtefactGraph, EstateEnv) {
    generate_estate(&EstatePreset::Minimal.spec(), seed).unwrap()
}
