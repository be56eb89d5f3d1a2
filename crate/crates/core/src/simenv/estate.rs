use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::embedding::DEFAULT_DIM;
use crate::graph::{
    ArtefactGraph, ArtefactNode, AttrValue, Edge, EdgeType, GraphError, NodeType, ATTR_REPRO, ATTR_TEXT,
};
use crate::metrics::{check_simplex, reproducibility, FITNESS_DIM};
use crate::operators::{MergeTensor, ATTR_TENSOR};
use crate::rng::{derive_seed, seeded_rng, SimRng};

use super::keys;
use super::latent::{EstateEnv, STALE_TOKEN};
use super::Environment;

/// Language legacy code is translated into.
pub const TRANSLATION_TARGET: &str = "java";
const LEGACY_LANGUAGE: &str = "cobol";
const FLAGS: [&str; 4] = ["flag.lto", "flag.pgo", "flag.timestamps", "flag.static"];
const INITIAL_REBUILDS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimEnvError {
    #[error("invalid estate spec field `{field}`: {message}")]
    InvalidSpec { field: &'static str, message: String },
    #[error("unknown estate preset `{0}`")]
    UnknownPreset(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstatePreset {
    Reference,
    Minimal,
    FlakyBuild,
    LatencyShock,
}

impl EstatePreset {
    pub const ALL: [EstatePreset; 4] =
        [EstatePreset::Reference, EstatePreset::Minimal, EstatePreset::FlakyBuild, EstatePreset::LatencyShock];

    pub fn name(self) -> &'static str {
        match self {
            EstatePreset::Reference => "reference",
            EstatePreset::Minimal => "minimal",
            EstatePreset::FlakyBuild => "flaky-build",
            EstatePreset::LatencyShock => "latency-shock",
        }
    }

    pub fn spec(self) -> EstateSpec {
        match self {
            EstatePreset::Reference => EstateSpec::default(),
            EstatePreset::Minimal => EstateSpec {
                counts: counts(&[
                    (NodeType::Code, 4),
                    (NodeType::Doc, 2),
                    (NodeType::Build, 1),
                    (NodeType::Compiler, 1),
                    (NodeType::Policy, 1),
                    (NodeType::Ticket, 1),
                    (NodeType::Test, 1),
                ]),
                locked_code: 0,
                timestamp_builds: 0,
                probes: 8,
                contracts: 3,
                ..EstateSpec::default()
            },
            EstatePreset::FlakyBuild => EstateSpec { flakiness: 0.2, timestamp_builds: 3, ..EstateSpec::default() },
            EstatePreset::LatencyShock => EstateSpec { latency_factor: 1.5, ..EstateSpec::default() },
        }
    }
}

impl fmt::Display for EstatePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstatePreset {
    type Err = SimEnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EstatePreset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| SimEnvError::UnknownPreset(s.to_string()))
    }
}

fn counts(pairs: &[(NodeType, usize)]) -> BTreeMap<NodeType, usize> {
    pairs.iter().copied().collect()
}

/// Parameters of a synthetic estate. The defaults are the reference preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstateSpec {
    pub counts: BTreeMap<NodeType, usize>,
    /// Expected out-degree per eligible source node, by edge type.
    /// `documents` and `builds` edges are always generated one per doc and
    /// one per code node respectively.
    pub edge_density: BTreeMap<EdgeType, f64>,
    pub dim: usize,
    /// Fraction of code nodes written in the legacy language.
    pub legacy_fraction: f64,
    /// Code nodes pinned by human policy.
    pub locked_code: usize,
    pub q_func: [f64; 2],
    pub q_perf: [f64; 2],
    pub q_sec: [f64; 2],
    /// Behavioral probes used for drift.
    pub probes: usize,
    pub contracts: usize,
    /// Base probability that a rebuild hash diverges.
    pub flakiness: f64,
    /// Build nodes that embed timestamps (each adds divergence).
    pub timestamp_builds: usize,
    pub p0: [f64; 2],
    pub rho: [f64; 2],
    /// Hidden weights of the KPI reward.
    pub reward_weights: [f64; FITNESS_DIM],
    pub reward_sigma: f64,
    /// Relative noise on latency and security measurements.
    pub metric_noise: f64,
    /// Multiplier on every latency measurement.
    pub latency_factor: f64,
    pub tensor_rows: usize,
    pub tensor_cols: usize,
    pub tensor_noise: f64,
    /// Fraction of docs starting with an extra outdated token.
    pub stale_docs: f64,
    /// Probability that the doc generator drops a template token.
    pub draft_drop: f64,
}

impl Default for EstateSpec {
    fn default() -> Self {
        Self {
            counts: counts(&[
                (NodeType::Code, 60),
                (NodeType::Doc, 20),
                (NodeType::Build, 8),
                (NodeType::Compiler, 3),
                (NodeType::Test, 4),
                (NodeType::Schema, 4),
                (NodeType::Policy, 2),
                (NodeType::Ticket, 8),
                (NodeType::Ui, 1),
                (NodeType::Log, 2),
                (NodeType::Metric, 2),
                (NodeType::Data, 2),
            ]),
            edge_density: [
                (EdgeType::Calls, 2.0),
                (EdgeType::DynamicCall, 0.3),
                (EdgeType::DependsOn, 1.0),
                (EdgeType::Generates, 1.0),
                (EdgeType::DerivedFrom, 3.0),
                (EdgeType::EmitsMetric, 0.2),
            ]
            .into_iter()
            .collect(),
            dim: DEFAULT_DIM,
            legacy_fraction: 0.25,
            locked_code: 3,
            q_func: [0.65, 0.9],
            q_perf: [0.3, 0.6],
            q_sec: [0.8, 0.98],
            probes: 40,
            contracts: 10,
            flakiness: 0.0,
            timestamp_builds: 1,
            p0: [0.4, 0.8],
            rho: [0.2, 0.6],
            reward_weights: [1.0 / 6.0; FITNESS_DIM],
            reward_sigma: 0.01,
            metric_noise: 0.002,
            latency_factor: 1.0,
            tensor_rows: 6,
            tensor_cols: 6,
            tensor_noise: 0.6,
            stale_docs: 0.3,
            draft_drop: 0.05,
        }
    }
}

fn invalid(field: &'static str, message: impl Into<String>) -> SimEnvError {
    SimEnvError::InvalidSpec { field, message: message.into() }
}

fn check_range(field: &'static str, r: [f64; 2], lo: f64, hi: f64) -> Result<(), SimEnvError> {
    if r.iter().all(|x| x.is_finite()) && lo <= r[0] && r[0] <= r[1] && r[1] <= hi {
        Ok(())
    } else {
        Err(invalid(field, format!("expected an ordered range within [{lo}, {hi}], got {r:?}")))
    }
}

fn check_prob(field: &'static str, p: f64) -> Result<(), SimEnvError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(field, format!("must be in [0, 1], got {p}")))
    }
}

impl EstateSpec {
    pub fn count(&self, node_type: NodeType) -> usize {
        self.counts.get(&node_type).copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), SimEnvError> {
        if self.dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        for (kind, d) in &self.edge_density {
            if !(d.is_finite() && *d >= 0.0) {
                return Err(invalid("edge_density", format!("{kind}: must be non-negative, got {d}")));
            }
        }
        check_prob("legacy_fraction", self.legacy_fraction)?;
        if self.locked_code > self.count(NodeType::Code) {
            return Err(invalid("locked_code", "exceeds the number of code nodes"));
        }
        check_range("q_func", self.q_func, 0.0, 1.0)?;
        check_range("q_perf", self.q_perf, 0.0, 1.0)?;
        check_range("q_sec", self.q_sec, 0.0, 1.0)?;
        check_prob("flakiness", self.flakiness)?;
        if self.timestamp_builds > self.count(NodeType::Build) {
            return Err(invalid("timestamp_builds", "exceeds the number of build nodes"));
        }
        check_range("p0", self.p0, 0.0, 1.0)?;
        check_range("rho", self.rho, 0.0, 1.0)?;
        check_simplex(&self.reward_weights).map_err(|e| invalid("reward_weights", e.to_string()))?;
        for (field, v) in [
            ("reward_sigma", self.reward_sigma),
            ("metric_noise", self.metric_noise),
            ("tensor_noise", self.tensor_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(field, format!("must be non-negative, got {v}")));
            }
        }
        if !(self.latency_factor.is_finite() && self.latency_factor > 0.0) {
            return Err(invalid("latency_factor", format!("must be positive, got {}", self.latency_factor)));
        }
        if self.tensor_rows == 0 || self.tensor_cols == 0 {
            return Err(invalid("tensor_rows", "tensor dimensions must be positive"));
        }
        check_prob("stale_docs", self.stale_docs)?;
        check_prob("draft_drop", self.draft_drop)?;
        Ok(())
    }
}

fn uniform(rng: &mut SimRng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Adds about `density` edges of `kind` from every source to distinct targets.
fn scatter_edges(
    graph: &mut ArtefactGraph,
    rng: &mut SimRng,
    sources: &[String],
    targets: &[String],
    kind: EdgeType,
    density: f64,
) -> Result<(), GraphError> {
    for src in sources {
        let pool: Vec<&String> = targets.iter().filter(|t| *t != src).collect();
        if pool.is_empty() {
            continue;
        }
        let whole = density.floor() as usize;
        let extra = usize::from(rng.random::<f64>() < density.fract());
        let n = (whole + extra).min(pool.len());
        for i in sample(rng, pool.len(), n) {
            graph.insert_edge(Edge::new(src.clone(), pool[i].clone(), kind))?;
        }
    }
    Ok(())
}

fn ids(prefix: NodeType, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{}-{:03}", prefix.as_str(), i)).collect()
}

/// Builds the initial graph `G₀` of an estate and its environment.
pub fn generate_estate(spec: &EstateSpec, seed: u64) -> Result<(ArtefactGraph, EstateEnv), SimEnvError> {
    spec.validate()?;
    let dim = spec.dim;
    let mut rng = seeded_rng(derive_seed(seed, &[0xE57A7E]));
    let mut graph = ArtefactGraph::new(dim);

    let id_lists: BTreeMap<NodeType, Vec<String>> =
        NodeType::ALL.into_iter().map(|t| (t, ids(t, spec.count(t)))).collect();
    let of = |t: NodeType| id_lists[&t].as_slice();

    let code = of(NodeType::Code);
    let n_legacy = (spec.legacy_fraction * code.len() as f64).round() as usize;
    let legacy: Vec<usize> = sample(&mut rng, code.len(), n_legacy).into_vec();
    let locked: Vec<usize> = sample(&mut rng, code.len(), spec.locked_code).into_vec();
    for (i, id) in code.iter().enumerate() {
        let is_legacy = legacy.contains(&i);
        let mut node = ArtefactNode::new(id.clone(), NodeType::Code, dim)
            .with_attr(keys::Q_FUNC, uniform(&mut rng, spec.q_func))
            .with_attr(keys::Q_PERF, uniform(&mut rng, spec.q_perf))
            .with_attr(keys::Q_SEC, uniform(&mut rng, spec.q_sec))
            .with_attr(keys::HOT, rng.random_range(0.2..1.0))
            .with_attr(keys::REVISION, 1.0)
            .with_attr(keys::BUILDS_OK, true)
            .with_attr(keys::LANG, if is_legacy { LEGACY_LANGUAGE } else { TRANSLATION_TARGET })
            .locked(locked.contains(&i));
        if is_legacy {
            node.set_attr(keys::LEGACY_LANG, LEGACY_LANGUAGE);
        }
        graph.insert_node(node)?;
    }

    let target = MergeTensor::new(
        spec.tensor_rows,
        spec.tensor_cols,
        (0..spec.tensor_rows * spec.tensor_cols).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect(),
    )
    .expect("finite target");
    for t in [NodeType::Compiler, NodeType::Policy] {
        for id in of(t) {
            let noisy: Vec<f64> = target
                .data()
                .iter()
                .map(|x| x + spec.tensor_noise * rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let mut perm: Vec<usize> = (0..spec.tensor_rows).collect();
            for i in (1..perm.len()).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let tensor =
                MergeTensor::new(spec.tensor_rows, spec.tensor_cols, noisy).expect("finite tensor").permute_rows(&perm);
            graph.insert_node(ArtefactNode::new(id.clone(), t, dim).with_attr(ATTR_TENSOR, tensor.to_attr()))?;
        }
    }

    let builds = of(NodeType::Build);
    for (i, id) in builds.iter().enumerate() {
        let mut node = ArtefactNode::new(id.clone(), NodeType::Build, dim)
            .with_attr(keys::TOOLCHAIN, 1.0)
            .with_attr(keys::DEPS, 0.0);
        for flag in FLAGS {
            node.set_attr(flag, flag == keys::FLAG_TIMESTAMPS && i < spec.timestamp_builds);
        }
        graph.insert_node(node)?;
    }

    for t in [
        NodeType::Test,
        NodeType::Schema,
        NodeType::Ticket,
        NodeType::Ui,
        NodeType::Log,
        NodeType::Metric,
        NodeType::Data,
    ] {
        for id in of(t) {
            graph.insert_node(ArtefactNode::new(id.clone(), t, dim))?;
        }
    }

    let env = EstateEnv::new(spec.clone(), seed, target, &graph, &mut rng);

    // Docs are paired with distinct code nodes and start one revision behind.
    let docs = of(NodeType::Doc);
    if !code.is_empty() {
        let paired = sample(&mut rng, code.len(), docs.len().min(code.len())).into_vec();
        for (d, doc_id) in docs.iter().enumerate() {
            let code_id = &code[paired.get(d).copied().unwrap_or(d % code.len())];
            let mut tokens = env.doc_template(&graph, code_id);
            if let Some(pos) = tokens.iter().position(|t| t == "revision") {
                tokens[pos + 1] = "0".to_string();
            }
            if rng.random::<f64>() < spec.stale_docs {
                let pos = rng.random_range(0..tokens.len());
                tokens[pos] = STALE_TOKEN.to_string();
            }
            graph.insert_node(
                ArtefactNode::new(doc_id.clone(), NodeType::Doc, dim).with_attr(ATTR_TEXT, tokens.join(" ")),
            )?;
            graph.insert_edge(Edge::new(doc_id.clone(), code_id.clone(), EdgeType::Documents))?;
        }
    } else {
        for doc_id in docs {
            graph.insert_node(ArtefactNode::new(doc_id.clone(), NodeType::Doc, dim))?;
        }
    }

    if !builds.is_empty() {
        for (i, c) in code.iter().enumerate() {
            graph.insert_edge(Edge::new(builds[i % builds.len()].clone(), c.clone(), EdgeType::Builds))?;
        }
    }
    let density = |k: EdgeType| spec.edge_density.get(&k).copied().unwrap_or(0.0);
    let deps: Vec<String> = of(NodeType::Schema).iter().chain(of(NodeType::Data)).cloned().collect();
    let derived_sources: Vec<String> = of(NodeType::Ticket).iter().chain(of(NodeType::Test)).cloned().collect();
    let sinks: Vec<String> = of(NodeType::Metric).iter().chain(of(NodeType::Log)).cloned().collect();
    scatter_edges(&mut graph, &mut rng, code, code, EdgeType::Calls, density(EdgeType::Calls))?;
    scatter_edges(&mut graph, &mut rng, code, code, EdgeType::DynamicCall, density(EdgeType::DynamicCall))?;
    scatter_edges(&mut graph, &mut rng, code, &deps, EdgeType::DependsOn, density(EdgeType::DependsOn))?;
    scatter_edges(&mut graph, &mut rng, builds, &deps, EdgeType::DependsOn, density(EdgeType::DependsOn))?;
    scatter_edges(
        &mut graph,
        &mut rng,
        of(NodeType::Compiler),
        code,
        EdgeType::Generates,
        density(EdgeType::Generates),
    )?;
    scatter_edges(&mut graph, &mut rng, &derived_sources, code, EdgeType::DerivedFrom, density(EdgeType::DerivedFrom))?;
    scatter_edges(&mut graph, &mut rng, code, &sinks, EdgeType::EmitsMetric, density(EdgeType::EmitsMetric))?;
    scatter_edges(&mut graph, &mut rng, of(NodeType::Ui), code, EdgeType::Calls, density(EdgeType::Calls))?;

    let hashes = env.rebuild(&graph, INITIAL_REBUILDS, 0);
    let repro = reproducibility(&hashes).unwrap_or(1.0);
    graph.set_attribute(ATTR_REPRO.to_string(), AttrValue::Num(repro));
    graph.validate()?;
    Ok((graph, env))
}
