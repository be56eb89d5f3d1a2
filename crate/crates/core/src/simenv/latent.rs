use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use sha2::{Digest, Sha256};

use crate::graph::embedding::{text_embedding, tokenize};
use crate::graph::{ArtefactGraph, ArtefactNode, EdgeType, NodeType};
use crate::metrics::{
    dot, freshness, normalize_latency, NormalizationBounds, RawMetrics, DEFAULT_FRESHNESS_BLEND, FITNESS_DIM,
};
use crate::operators::{align, MergeTensor, PatchFeatures};
use crate::rng::{derive_seed, seed_from_bytes, seeded_rng, SimRng};

use super::estate::EstateSpec;
use super::{keys, Environment, PatchProposal, Shock, TransmuteParams};

pub(crate) const STALE_TOKEN: &str = "deprecated";

const DOMAIN_WORDS: [&str; 16] = [
    "ledger",
    "billing",
    "account",
    "payment",
    "invoice",
    "customer",
    "order",
    "catalog",
    "shipping",
    "pricing",
    "audit",
    "session",
    "report",
    "inventory",
    "settlement",
    "loyalty",
];
const PERF_TIERS: [&str; 4] = ["slow", "moderate", "fast", "optimal"];
const SEC_TIERS: [&str; 4] = ["weak", "fair", "strong", "hardened"];

/// Latency model: `base + span * weighted mean of (1 - q_perf)`.
const LATENCY_BASE: f64 = 100.0;
const LATENCY_SPAN: f64 = 300.0;
const LEGACY_SLOWDOWN: f64 = 1.25;
const LEGACY_FUNC: f64 = 0.85;
const TIMESTAMP_DIVERGENCE: f64 = 0.25;
const TOOLCHAIN_FIX: f64 = 0.05;
const COMPILE_OK: f64 = 0.9;
const CONTRACT_FLOOR: f64 = 0.45;
const CONTRACT_EQUIV: f64 = 0.9;
const NO_TENSOR_QUALITY: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
struct Probe {
    node: String,
    threshold: f64,
    salt: f64,
}

/// Latent-quality environment behind a generated estate.
#[derive(Debug, Clone)]
pub struct EstateEnv {
    spec: EstateSpec,
    seed: u64,
    bounds: NormalizationBounds,
    target: MergeTensor,
    probes: Vec<Probe>,
    contracts: Vec<String>,
    latency_factor: f64,
    flakiness: f64,
    reward_weights: [f64; FITNESS_DIM],
}

fn digest(seed: u64, parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new().chain_update(b"evograph/estate/v1").chain_update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

fn unit(bytes: &[u8; 32]) -> f64 {
    (seed_from_bytes(bytes) >> 11) as f64 / (1u64 << 53) as f64
}

/// Standard normal truncated to `[-3, 3]`.
fn truncated_normal(rng: &mut SimRng) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 3.0 {
            return z;
        }
    }
}

fn tier(q: f64, names: &[&'static str; 4]) -> &'static str {
    names[((q * 4.0).floor().max(0.0) as usize).min(3)]
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn domain_words(code_id: &str) -> [&'static str; 3] {
    let d = Sha256::digest(code_id.as_bytes());
    [0, 1, 2].map(|i| DOMAIN_WORDS[d[i] as usize % DOMAIN_WORDS.len()])
}

fn is_broken(node: &ArtefactNode) -> bool {
    node.flag(keys::BUILDS_OK) == Some(false)
}

/// Functional quality of a code node after language penalties.
fn functionality(node: &ArtefactNode) -> f64 {
    if is_broken(node) {
        return 0.0;
    }
    let q = node.num(keys::Q_FUNC).unwrap_or(0.0);
    if node.str_attr(keys::LEGACY_LANG).is_some() {
        q * LEGACY_FUNC
    } else if let Some(equiv) = node.num(keys::EQUIV) {
        q * equiv
    } else {
        q
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl EstateEnv {
    pub(crate) fn new(
        spec: EstateSpec,
        seed: u64,
        target: MergeTensor,
        graph: &ArtefactGraph,
        rng: &mut SimRng,
    ) -> Self {
        let code: Vec<&ArtefactNode> = graph.nodes_of_type(NodeType::Code).collect();
        let mut probes = Vec::new();
        let mut contracts = Vec::new();
        if !code.is_empty() {
            for _ in 0..spec.probes {
                let node = code[rng.random_range(0..code.len())];
                let q = node.num(keys::Q_FUNC).unwrap_or(0.0);
                probes.push(Probe {
                    node: node.id.clone(),
                    threshold: q - rng.random_range(0.03..0.25),
                    salt: rng.random(),
                });
            }
            for _ in 0..spec.contracts {
                contracts.push(code[rng.random_range(0..code.len())].id.clone());
            }
        }
        Self {
            latency_factor: spec.latency_factor,
            flakiness: spec.flakiness,
            reward_weights: spec.reward_weights,
            spec,
            seed,
            bounds: NormalizationBounds::default(),
            target,
            probes,
            contracts,
        }
    }

    pub fn spec(&self) -> &EstateSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn set_bounds(&mut self, bounds: NormalizationBounds) {
        self.bounds = bounds;
    }

    pub fn reward_weights(&self) -> [f64; FITNESS_DIM] {
        self.reward_weights
    }

    pub fn latency_factor(&self) -> f64 {
        self.latency_factor
    }

    /// Metric noise off: used by property tests of the latent model.
    pub fn set_metric_noise(&mut self, noise: f64) {
        self.spec.metric_noise = noise;
    }

    pub fn set_reward_sigma(&mut self, sigma: f64) {
        self.spec.reward_sigma = sigma;
    }

    pub fn target_tensor(&self) -> &MergeTensor {
        &self.target
    }

    fn noise(&self, content: &[u8; 32], tag: &[u8]) -> f64 {
        let d = digest(self.seed, &[content, tag]);
        truncated_normal(&mut seeded_rng(seed_from_bytes(&d)))
    }

    /// Mean critic score of the operator-model tensors in the graph.
    pub fn tensor_level(&self, graph: &ArtefactGraph) -> f64 {
        mean(
            graph
                .nodes()
                .filter(|n| matches!(n.node_type, NodeType::Compiler | NodeType::Policy))
                .filter_map(MergeTensor::from_node)
                .map(|t| self.tensor_quality(&t)),
        )
        .unwrap_or(NO_TENSOR_QUALITY)
    }

    /// Latency before noise and shocks.
    pub fn base_latency(&self, graph: &ArtefactGraph) -> f64 {
        let mut weighted = 0.0;
        let mut total = 0.0;
        for n in graph.nodes_of_type(NodeType::Code) {
            let hot = n.num(keys::HOT).unwrap_or(1.0);
            let slow = 1.0 - n.num(keys::Q_PERF).unwrap_or(0.0);
            let mult = if n.str_attr(keys::LEGACY_LANG).is_some() { LEGACY_SLOWDOWN } else { 1.0 };
            weighted += hot * slow * mult;
            total += hot;
        }
        let slowness = if total > 0.0 { weighted / total } else { 0.0 };
        LATENCY_BASE + LATENCY_SPAN * slowness
    }

    fn doc_pairs<'a>(&self, graph: &'a ArtefactGraph) -> impl Iterator<Item = (&'a str, &'a str)> {
        graph.edges_of_kind(EdgeType::Documents).filter_map(move |e| {
            let doc = graph.node(&e.src)?;
            let code = graph.node(&e.dst)?;
            (doc.node_type == NodeType::Doc && code.node_type == NodeType::Code)
                .then_some((e.src.as_str(), e.dst.as_str()))
        })
    }

    fn build_divergence(&self, graph: &ArtefactGraph) -> f64 {
        let stable = graph.nodes_of_type(NodeType::Build).fold(1.0 - self.flakiness, |acc, b| {
            let f = if b.flag(keys::FLAG_TIMESTAMPS).unwrap_or(false) {
                let toolchain = b.num(keys::TOOLCHAIN).unwrap_or(1.0);
                (TIMESTAMP_DIVERGENCE - TOOLCHAIN_FIX * (toolchain - 1.0)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            acc * (1.0 - f)
        });
        (1.0 - stable).clamp(0.0, 1.0)
    }

    fn build_config_hash(&self, graph: &ArtefactGraph) -> [u8; 32] {
        let mut h = Sha256::new();
        for b in graph.nodes_of_type(NodeType::Build) {
            h.update(b.id.as_bytes());
            h.update(serde_json::to_vec(&b.attributes).expect("attributes serialize"));
        }
        for e in graph.edges_of_kind(EdgeType::DependsOn) {
            h.update(e.src.as_bytes());
            h.update([0]);
            h.update(e.dst.as_bytes());
        }
        h.finalize().into()
    }
}

impl Environment for EstateEnv {
    fn bounds(&self) -> NormalizationBounds {
        self.bounds
    }

    fn metrics(&self, graph: &ArtefactGraph) -> RawMetrics {
        let tq = self.tensor_level(graph);
        let noise = self.spec.metric_noise;
        let content = if noise > 0.0 { graph.content_hash() } else { [0; 32] };

        let func = mean(graph.nodes_of_type(NodeType::Code).map(functionality)).unwrap_or(0.0);
        let u = (func * (0.6 + 0.4 * tq)).clamp(0.0, 1.0);

        let p =
            self.latency_factor * self.base_latency(graph) * (1.0 + noise * self.noise(&content, b"latency")).max(0.01);

        let sec = mean(graph.nodes_of_type(NodeType::Code).map(|n| n.num(keys::Q_SEC).unwrap_or(0.0))).unwrap_or(0.0);
        let s = (sec * (0.7 + 0.3 * tq) + noise * self.noise(&content, b"security")).clamp(0.0, 1.0);

        let tickets = mean(graph.nodes_of_type(NodeType::Ticket).filter_map(|t| {
            mean(
                graph
                    .edges_of_kind(EdgeType::DerivedFrom)
                    .filter(|e| e.src == t.id)
                    .filter_map(|e| graph.node(&e.dst))
                    .filter(|n| n.node_type == NodeType::Code)
                    .map(functionality),
            )
        }))
        .unwrap_or(func);
        let b = (0.5 * tickets + 0.5 * (1.0 - normalize_latency(p, &self.bounds))).clamp(0.0, 1.0);

        let d = mean(self.doc_pairs(graph).map(|(doc, code)| self.doc_freshness(graph, doc, code))).unwrap_or(1.0);
        let c = graph.num_attribute(crate::graph::ATTR_REPRO).unwrap_or(1.0).clamp(0.0, 1.0);
        RawMetrics { u, p, s, b, d, c }
    }

    fn test_pass_rate(&self, graph: &ArtefactGraph) -> f64 {
        mean(graph.nodes_of_type(NodeType::Code).map(|n| {
            if is_broken(n) {
                0.0
            } else {
                (0.7 + 0.3 * n.num(keys::Q_FUNC).unwrap_or(0.0)).clamp(0.0, 1.0)
            }
        }))
        .unwrap_or(1.0)
    }

    fn contracts(&self, graph: &ArtefactGraph) -> Vec<bool> {
        self.contracts
            .iter()
            .map(|id| {
                graph.node(id).is_some_and(|n| {
                    !is_broken(n)
                        && n.num(keys::Q_FUNC).unwrap_or(0.0) >= CONTRACT_FLOOR
                        && n.num(keys::EQUIV).is_none_or(|e| e >= CONTRACT_EQUIV)
                })
            })
            .collect()
    }

    fn probes(&self, graph: &ArtefactGraph) -> Vec<bool> {
        self.probes
            .iter()
            .map(|p| {
                let Some(n) = graph.node(&p.node) else { return false };
                let outcome = !is_broken(n) && n.num(keys::Q_FUNC).unwrap_or(0.0) >= p.threshold;
                match n.num(keys::EQUIV) {
                    Some(equiv) if p.salt > equiv => !outcome,
                    _ => outcome,
                }
            })
            .collect()
    }

    fn rebuild(&self, graph: &ArtefactGraph, m: usize, nonce: u64) -> Vec<String> {
        let config = self.build_config_hash(graph);
        let f = self.build_divergence(graph);
        let canonical = hex(&config);
        (0..m as u64)
            .map(|j| {
                let d = digest(self.seed, &[&config, &nonce.to_le_bytes(), &j.to_le_bytes()]);
                if unit(&d) < f {
                    hex(&d)
                } else {
                    canonical.clone()
                }
            })
            .collect()
    }

    fn reward(&self, graph: &ArtefactGraph) -> f64 {
        let f = self.fitness(graph);
        let noise = if self.spec.reward_sigma > 0.0 { self.noise(&graph.content_hash(), b"reward") } else { 0.0 };
        let r = dot(&self.reward_weights, &f.0) + self.spec.reward_sigma * noise;
        r.clamp(0.0, 1.0)
    }

    fn transmute_params(&self, graph: &ArtefactGraph, node_id: &str) -> Option<TransmuteParams> {
        let node = graph.node(node_id)?;
        node.str_attr(keys::LEGACY_LANG)?;
        let mut rng = seeded_rng(seed_from_bytes(&digest(self.seed, &[b"transmute", node_id.as_bytes()])));
        let draw = |rng: &mut SimRng, r: [f64; 2]| if r[0] == r[1] { r[0] } else { rng.random_range(r[0]..r[1]) };
        let p0 = draw(&mut rng, self.spec.p0);
        let rho = draw(&mut rng, self.spec.rho);
        Some(TransmuteParams { p0, rho })
    }

    fn doc_template(&self, graph: &ArtefactGraph, code_id: &str) -> Vec<String> {
        let Some(n) = graph.node(code_id) else { return Vec::new() };
        let [a, b, c] = domain_words(code_id);
        let revision = n.num(keys::REVISION).unwrap_or(0.0);
        [
            code_id,
            "handles",
            a,
            b,
            c,
            "revision",
            &format!("{revision}"),
            "latency",
            tier(n.num(keys::Q_PERF).unwrap_or(0.0), &PERF_TIERS),
            "security",
            tier(n.num(keys::Q_SEC).unwrap_or(0.0), &SEC_TIERS),
            "language",
            n.str_attr(keys::LANG).unwrap_or("unknown"),
        ]
        .iter()
        .map(|t| t.to_lowercase())
        .collect()
    }

    fn draft_doc(&self, graph: &ArtefactGraph, code_id: &str, seed: u64) -> Vec<String> {
        let mut rng = seeded_rng(derive_seed(seed, &[self.seed]));
        let drop = self.spec.draft_drop;
        self.doc_template(graph, code_id).into_iter().filter(|_| rng.random::<f64>() >= drop).collect()
    }

    fn doc_freshness(&self, graph: &ArtefactGraph, doc_id: &str, code_id: &str) -> f64 {
        let Some(doc) = graph.node(doc_id) else { return 0.0 };
        let reference = self.doc_template(graph, code_id);
        let candidate = tokenize(doc.text().unwrap_or(""));
        let emb_ref = text_embedding(&reference, doc.embedding.len());
        freshness(&reference, &candidate, &emb_ref, &doc.embedding, DEFAULT_FRESHNESS_BLEND).clamp(0.0, 1.0)
    }

    fn propose_patch(&self, graph: &ArtefactGraph, node_id: &str, seed: u64) -> Option<PatchProposal> {
        let node = graph.node(node_id)?;
        if node.node_type != NodeType::Code {
            return None;
        }
        let mut rng = seeded_rng(derive_seed(seed, &[self.seed]));
        let compile_ok = rng.random::<f64>() < COMPILE_OK;
        let d_perf = Normal::new(0.06, 0.05).expect("valid normal").sample(&mut rng);
        let d_sec = -0.3 * d_perf + Normal::new(0.0, 0.03).expect("valid normal").sample(&mut rng);
        let d_func = Normal::new(0.0, 0.02).expect("valid normal").sample(&mut rng);
        let lines = rng.random_range(5..=80) as f64;

        let get = |k| node.num(k).unwrap_or(0.0);
        let mut patched = node.clone();
        patched.set_attr(keys::Q_PERF, (get(keys::Q_PERF) + d_perf).clamp(0.0, 1.0));
        patched.set_attr(keys::Q_SEC, (get(keys::Q_SEC) + d_sec).clamp(0.0, 1.0));
        patched.set_attr(keys::Q_FUNC, (get(keys::Q_FUNC) + d_func).clamp(0.0, 1.0));
        patched.set_attr(keys::REVISION, get(keys::REVISION) + 1.0);
        patched.set_attr(keys::BUILDS_OK, compile_ok);
        Some(PatchProposal {
            node: patched,
            features: PatchFeatures {
                compile_ok: if compile_ok { 1.0 } else { 0.0 },
                static_delta: (d_sec * 30.0).round(),
                size_penalty: lines / 100.0,
            },
        })
    }

    fn tensor_quality(&self, tensor: &MergeTensor) -> f64 {
        let Ok((aligned, _)) = align(tensor, &self.target) else { return 0.0 };
        let norm = self.target.frobenius_norm();
        if norm == 0.0 {
            return if aligned.frobenius_norm() == 0.0 { 1.0 } else { 0.0 };
        }
        (-aligned.frobenius_distance(&self.target) / norm).exp()
    }

    fn apply_shock(&mut self, shock: &Shock) {
        match *shock {
            Shock::LatencySpike { factor } => self.latency_factor *= factor,
            Shock::Flakiness { probability } => self.flakiness = probability.clamp(0.0, 1.0),
        }
    }

    fn set_reward_weights(&mut self, weights: [f64; FITNESS_DIM]) {
        self.reward_weights = weights;
    }
}
