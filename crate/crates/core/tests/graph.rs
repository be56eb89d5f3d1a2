use evograph::graph::{
    descriptor, deserialize, diff, serialize, ArtefactGraph, ArtefactNode, EdgeType, GraphError, NodeType,
    DESCRIPTOR_LEN,
};
use evograph::rng::seeded_rng;
use proptest::prelude::*;
use rand::Rng;

const DIM: usize = 16;

fn node(id: &str, t: NodeType) -> ArtefactNode {
    ArtefactNode::new(id, t, DIM)
}

fn random_graph(seed: u64, size: usize, prefix: &str) -> ArtefactGraph {
    let mut rng = seeded_rng(seed);
    let mut g = ArtefactGraph::new(DIM);
    let mut ids = Vec::new();
    for i in 0..size {
        let t = NodeType::ALL[rng.random_range(0..NodeType::ALL.len())];
        let id = format!("{prefix}{i}");
        let mut n = node(&id, t).with_attr("q", rng.random::<f64>());
        if rng.random_bool(0.3) {
            n = n.with_attr("text", format!("word{} other{}", rng.random_range(0..5), rng.random_range(0..5)));
        }
        if rng.random_bool(0.2) {
            n = n.with_attr("flag", true).locked(true);
        }
        g = g.add_node(n).unwrap();
        ids.push(id);
    }
    for _ in 0..size * 2 {
        let a = &ids[rng.random_range(0..ids.len())];
        let b = &ids[rng.random_range(0..ids.len())];
        let kind = EdgeType::ALL[rng.random_range(0..EdgeType::ALL.len())];
        if a == b && !kind.allows_self_loop() {
            continue;
        }
        g = g.add_edge(a, b, kind).unwrap();
    }
    if rng.random_bool(0.5) {
        g = g.with_attribute("repro", rng.random::<f64>());
    }
    g
}

/// Two graphs sharing some ids, with overlapping but different content.
fn random_pair(seed: u64) -> (ArtefactGraph, ArtefactGraph) {
    let a = random_graph(seed, 10, "n");
    let mut b = random_graph(seed ^ 0xABCD, 10, "n");
    let mut rng = seeded_rng(seed.wrapping_add(7));
    for i in 0..rng.random_range(0..4) {
        b = b.add_node(node(&format!("extra{i}"), NodeType::Doc)).unwrap();
    }
    (a, b)
}

#[test]
fn add_node_examples() {
    let g = ArtefactGraph::new(DIM).add_node(node("a", NodeType::Code)).unwrap();
    assert_eq!(g.node_count(), 1);
    assert_eq!(g.add_node(node("a", NodeType::Doc)), Err(GraphError::DuplicateId("a".into())));
    let short = node("b", NodeType::Code).with_embedding(vec![0.0; 15]);
    assert!(matches!(g.add_node(short), Err(GraphError::EmbeddingDimensionMismatch { expected: 16, found: 15, .. })));
}

#[test]
fn add_edge_examples() {
    let g = ArtefactGraph::new(DIM)
        .add_node(node("a", NodeType::Code))
        .unwrap()
        .add_node(node("b", NodeType::Code))
        .unwrap();
    let one = g.add_edge("a", "b", EdgeType::Calls).unwrap();
    assert_eq!(one.edge_count(), 1);
    assert_eq!(one.add_edge("a", "b", EdgeType::Calls).unwrap().edge_count(), 1);
    assert!(matches!(g.add_edge("a", "a", EdgeType::Calls), Err(GraphError::IllegalSelfLoop { .. })));
    assert!(matches!(g.add_edge("a", "zz", EdgeType::Calls), Err(GraphError::UnknownEndpoint(_))));
}

#[test]
fn operations_leave_input_untouched() {
    let g = random_graph(3, 8, "n");
    let before = serialize(&g);
    let _ = g.add_node(node("fresh", NodeType::Log)).unwrap();
    let _ = g.add_edge("n0", "n1", EdgeType::Generates).unwrap();
    let _ = g.with_attribute("k", 1.0);
    assert_eq!(serialize(&g), before);
}

#[test]
fn descriptor_examples() {
    let empty = descriptor(&ArtefactGraph::new(DIM)).to_vec();
    assert_eq!(empty, vec![0.0; DESCRIPTOR_LEN]);

    let g = ArtefactGraph::new(DIM)
        .add_node(node("c1", NodeType::Code))
        .unwrap()
        .add_node(node("c2", NodeType::Code))
        .unwrap()
        .add_node(node("d1", NodeType::Doc))
        .unwrap();
    let d = descriptor(&g);
    let mut expected = [0.0; 12];
    expected[NodeType::Code.index()] = 2.0 / 3.0;
    expected[NodeType::Doc.index()] = 1.0 / 3.0;
    assert_eq!(d.type_histogram, expected);
    assert_eq!(d.perf_signature, [0.0, 0.0]);

    let mut all = ArtefactGraph::new(DIM);
    for (i, t) in NodeType::ALL.into_iter().enumerate() {
        all = all.add_node(node(&format!("x{i}"), t)).unwrap();
    }
    assert!(descriptor(&all).type_histogram.iter().all(|&h| h == 1.0 / 12.0));
}

#[test]
fn diff_examples() {
    let g = random_graph(11, 6, "n");
    assert!(diff(&g, &g).is_empty());
    let plus = g.add_node(node("x", NodeType::Ticket)).unwrap();
    let delta = diff(&g, &plus);
    assert_eq!(delta.nodes_added.len(), 1);
    assert_eq!(delta.nodes_added[0].id, "x");
    assert!(delta.nodes_removed.is_empty() && delta.nodes_changed.is_empty());
    assert!(delta.edges_added.is_empty() && delta.edges_removed.is_empty());
}

#[test]
fn unknown_node_type_is_malformed() {
    let text = r#"{"version":1,"dim":2,"nodes":[{"id":"a","type":"widget","embedding":[0.0,0.0]}],"edges":[]}"#;
    assert!(matches!(deserialize(text.as_bytes()), Err(GraphError::MalformedInput { .. })));
}

#[test]
fn dangling_edge_is_rejected() {
    let text = r#"{"version":1,"dim":1,"nodes":[{"id":"a","type":"code","embedding":[0.0]}],
        "edges":[{"src":"a","dst":"b","kind":"calls"}]}"#;
    assert!(deserialize(text.as_bytes()).is_err());
}

#[test]
fn serialization_is_canonical() {
    let g = random_graph(5, 12, "n");
    assert_eq!(serialize(&g), serialize(&deserialize(&serialize(&g)).unwrap()));
    assert_eq!(g.content_hash(), random_graph(5, 12, "n").content_hash());
}

proptest! {
    #[test]
    fn serialize_round_trip(seed in any::<u64>(), size in 1usize..20) {
        let g = random_graph(seed, size, "n");
        prop_assert_eq!(deserialize(&serialize(&g)).unwrap(), g);
    }

    #[test]
    fn diff_apply_round_trip(seed in any::<u64>()) {
        let (a, b) = random_pair(seed);
        let applied = diff(&a, &b).apply(&a).unwrap();
        prop_assert!(applied.same_content(&b));
        prop_assert!(diff(&applied, &b).is_empty());
    }

    #[test]
    fn histogram_sums_to_one(seed in any::<u64>(), size in 1usize..30) {
        let h = descriptor(&random_graph(seed, size, "n")).type_histogram;
        prop_assert!((h.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
}
