//! Typed directed graph of software artefacts.
//!
//! Graphs are values: every operation borrows the input and returns a new
//! graph. Nodes are reference counted, so copy-on-write clones only pay for
//! the nodes that actually change.

mod descriptor;
mod diff;
pub mod embedding;
mod io;
mod node;
mod types;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use descriptor::{descriptor, BehaviorDescriptor, DESCRIPTOR_LEN};
pub use diff::{diff, GraphDelta};
pub use io::{deserialize, serialize, FORMAT_VERSION};
pub use node::{ArtefactNode, ATTR_TEXT};
pub use types::{AttrValue, EdgeType, NodeType};

/// Graph attribute carrying the normalized p95 latency of the last evaluation.
pub const ATTR_LATENCY_NORM: &str = "latency_norm";
/// Graph attribute carrying the measured build reproducibility.
pub const ATTR_REPRO: &str = "repro";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("duplicate node id `{0}`")]
    DuplicateId(String),
    #[error("node `{id}` has embedding length {found}, graph dimension is {expected}")]
    EmbeddingDimensionMismatch { id: String, expected: usize, found: usize },
    #[error("edge endpoint `{0}` does not exist")]
    UnknownEndpoint(String),
    #[error("self-loop on `{id}` is not allowed for edge kind `{kind}`")]
    IllegalSelfLoop { id: String, kind: EdgeType },
    #[error("node `{0}` does not exist")]
    UnknownNode(String),
    #[error("node `{0}` has a non-finite embedding or attribute")]
    NonFiniteValue(String),
    #[error("unknown node type `{0}`")]
    UnknownNodeType(String),
    #[error("unknown edge type `{0}`")]
    UnknownEdgeType(String),
    #[error("malformed graph input{}{}: {message}",
        line.map(|l| format!(" at line {l}")).unwrap_or_default(),
        field.as_ref().map(|f| format!(" (field `{f}`)")).unwrap_or_default())]
    MalformedInput { line: Option<usize>, field: Option<String>, message: String },
}

/// Directed typed edge.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: String,
    pub dst: String,
    pub kind: EdgeType,
}

impl Edge {
    pub fn new(src: impl Into<String>, dst: impl Into<String>, kind: EdgeType) -> Self {
        Self { src: src.into(), dst: dst.into(), kind }
    }
}

/// One applied mutation, kept on the graph for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageRecord {
    pub generation: u32,
    pub operator: String,
    pub accepted: bool,
    pub acceptance_probability: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

fn hash_str(h: &mut Sha256, s: &str) {
    h.update((s.len() as u64).to_le_bytes());
    h.update(s.as_bytes());
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArtefactGraph {
    dim: usize,
    nodes: BTreeMap<String, Arc<ArtefactNode>>,
    edges: BTreeSet<Edge>,
    attributes: BTreeMap<String, AttrValue>,
    generation_born: u32,
    lineage: Vec<LineageRecord>,
}

impl Default for ArtefactGraph {
    fn default() -> Self {
        Self::new(embedding::DEFAULT_DIM)
    }
}

impl ArtefactGraph {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            nodes: BTreeMap::new(),
            edges: BTreeSet::new(),
            attributes: BTreeMap::new(),
            generation_born: 0,
            lineage: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &str) -> Option<&ArtefactNode> {
        self.nodes.get(id).map(Arc::as_ref)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    /// Nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &ArtefactNode> {
        self.nodes.values().map(Arc::as_ref)
    }

    pub fn nodes_of_type(&self, node_type: NodeType) -> impl Iterator<Item = &ArtefactNode> {
        self.nodes().filter(move |n| n.node_type == node_type)
    }

    /// Edges in (src, dst, kind) order.
    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn edges_of_kind(&self, kind: EdgeType) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.kind == kind)
    }

    pub fn has_edge(&self, src: &str, dst: &str, kind: EdgeType) -> bool {
        self.edges.contains(&Edge::new(src, dst, kind))
    }

    pub fn attributes(&self) -> &BTreeMap<String, AttrValue> {
        &self.attributes
    }

    pub fn attribute(&self, key: &str) -> Option<&AttrValue> {
        self.attributes.get(key)
    }

    pub fn num_attribute(&self, key: &str) -> Option<f64> {
        self.attribute(key).and_then(AttrValue::as_f64)
    }

    pub fn generation_born(&self) -> u32 {
        self.generation_born
    }

    pub fn lineage(&self) -> &[LineageRecord] {
        &self.lineage
    }

    pub fn add_node(&self, node: ArtefactNode) -> Result<Self, GraphError> {
        let mut next = self.clone();
        next.insert_node(node)?;
        Ok(next)
    }

    pub fn add_edge(&self, src: &str, dst: &str, kind: EdgeType) -> Result<Self, GraphError> {
        let mut next = self.clone();
        next.insert_edge(Edge::new(src, dst, kind))?;
        Ok(next)
    }

    /// Replaces an existing node (matched by id).
    pub fn with_node(&self, node: ArtefactNode) -> Result<Self, GraphError> {
        let mut next = self.clone();
        next.replace_node(node)?;
        Ok(next)
    }

    pub fn with_attribute(&self, key: impl Into<String>, value: impl Into<AttrValue>) -> Self {
        let mut next = self.clone();
        next.attributes.insert(key.into(), value.into());
        next
    }

    pub fn with_lineage(&self, record: LineageRecord) -> Self {
        let mut next = self.clone();
        next.lineage.push(record);
        next
    }

    pub fn with_generation_born(&self, generation: u32) -> Self {
        let mut next = self.clone();
        next.generation_born = generation;
        next
    }

    /// True when nodes, edges and graph attributes agree; lineage and
    /// birth generation are ignored.
    pub fn same_content(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.nodes == other.nodes
            && self.edges == other.edges
            && self.attributes == other.attributes
    }

    /// SHA-256 over canonical node and edge content.
    ///
    /// Graph-level attributes and lineage are excluded: two graphs whose
    /// artefacts agree hash equal even if their evaluation annotations differ.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        for node in self.nodes() {
            hash_str(&mut h, &node.id);
            h.update([node.node_type.index() as u8, u8::from(node.locked)]);
            for x in &node.embedding {
                h.update(x.to_bits().to_le_bytes());
            }
            h.update((node.attributes.len() as u64).to_le_bytes());
            for (k, v) in &node.attributes {
                hash_str(&mut h, k);
                match v {
                    AttrValue::Bool(b) => h.update([0, u8::from(*b)]),
                    AttrValue::Num(x) => {
                        h.update([1]);
                        h.update(x.to_bits().to_le_bytes());
                    }
                    AttrValue::Text(t) => {
                        h.update([2]);
                        hash_str(&mut h, t);
                    }
                }
            }
        }
        for e in &self.edges {
            hash_str(&mut h, &e.src);
            hash_str(&mut h, &e.dst);
            h.update([e.kind as u8]);
        }
        h.finalize().into()
    }

    /// Checks every structural invariant; used after deserialization.
    pub fn validate(&self) -> Result<(), GraphError> {
        for (id, node) in &self.nodes {
            if id != &node.id {
                return Err(GraphError::UnknownNode(id.clone()));
            }
            self.check_node(node)?;
        }
        for e in &self.edges {
            self.check_edge(e)?;
        }
        Ok(())
    }

    fn check_node(&self, node: &ArtefactNode) -> Result<(), GraphError> {
        if node.embedding.len() != self.dim {
            return Err(GraphError::EmbeddingDimensionMismatch {
                id: node.id.clone(),
                expected: self.dim,
                found: node.embedding.len(),
            });
        }
        if !node.is_finite() {
            return Err(GraphError::NonFiniteValue(node.id.clone()));
        }
        Ok(())
    }

    fn check_edge(&self, e: &Edge) -> Result<(), GraphError> {
        for end in [&e.src, &e.dst] {
            if !self.nodes.contains_key(end) {
                return Err(GraphError::UnknownEndpoint(end.clone()));
            }
        }
        if e.src == e.dst && !e.kind.allows_self_loop() {
            return Err(GraphError::IllegalSelfLoop { id: e.src.clone(), kind: e.kind });
        }
        Ok(())
    }

    // In-place helpers. Only used on freshly cloned values so the public
    // surface keeps value semantics.

    pub(crate) fn insert_node(&mut self, node: ArtefactNode) -> Result<(), GraphError> {
        if self.nodes.contains_key(&node.id) {
            return Err(GraphError::DuplicateId(node.id));
        }
        self.check_node(&node)?;
        self.nodes.insert(node.id.clone(), Arc::new(node));
        Ok(())
    }

    pub(crate) fn replace_node(&mut self, node: ArtefactNode) -> Result<(), GraphError> {
        if !self.nodes.contains_key(&node.id) {
            return Err(GraphError::UnknownNode(node.id));
        }
        self.check_node(&node)?;
        self.nodes.insert(node.id.clone(), Arc::new(node));
        Ok(())
    }

    pub(crate) fn remove_node(&mut self, id: &str) -> Result<(), GraphError> {
        if self.nodes.remove(id).is_none() {
            return Err(GraphError::UnknownNode(id.to_string()));
        }
        self.edges.retain(|e| e.src != id && e.dst != id);
        Ok(())
    }

    pub(crate) fn insert_edge(&mut self, edge: Edge) -> Result<(), GraphError> {
        self.check_edge(&edge)?;
        self.edges.insert(edge);
        Ok(())
    }

    pub(crate) fn remove_edge(&mut self, edge: &Edge) -> bool {
        self.edges.remove(edge)
    }

    pub(crate) fn set_attribute(&mut self, key: String, value: AttrValue) {
        self.attributes.insert(key, value);
    }

    pub(crate) fn remove_attribute(&mut self, key: &str) {
        self.attributes.remove(key);
    }

    pub(crate) fn set_lineage(&mut self, lineage: Vec<LineageRecord>) {
        self.lineage = lineage;
    }

    pub(crate) fn set_generation_born(&mut self, generation: u32) {
        self.generation_born = generation;
    }
}
