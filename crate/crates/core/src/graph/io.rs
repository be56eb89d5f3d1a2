//! Canonical JSON graph file format (version 1).
//!
//! ```text
//! { "version": 1, "dim": 16,
//!   "nodes": [ {"id", "type", "embedding", "attributes", "locked"} ... ],
//!   "edges": [ {"src", "dst", "kind"} ... ],
//!   "attributes": {...}, "generation_born": 0, "lineage": [...] }
//! ```
//!
//! Nodes are written sorted by id and edges by (src, dst, kind), so the same
//! graph always produces the same bytes. `attributes`, `generation_born` and
//! `lineage` are optional on input.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ArtefactGraph, ArtefactNode, AttrValue, Edge, GraphError, LineageRecord};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    version: u32,
    dim: usize,
    #[serde(default)]
    generation_born: u32,
    #[serde(default)]
    attributes: BTreeMap<String, AttrValue>,
    nodes: Vec<ArtefactNode>,
    edges: Vec<Edge>,
    #[serde(default)]
    lineage: Vec<LineageRecord>,
}

pub fn serialize(graph: &ArtefactGraph) -> Vec<u8> {
    let file = GraphFile {
        version: FORMAT_VERSION,
        dim: graph.dim(),
        generation_born: graph.generation_born(),
        attributes: graph.attributes().clone(),
        nodes: graph.nodes().cloned().collect(),
        edges: graph.edges().cloned().collect(),
        lineage: graph.lineage().to_vec(),
    };
    let mut out = serde_json::to_vec_pretty(&file).expect("graph file serializes");
    out.push(b'\n');
    out
}

fn malformed(field: impl Into<String>, err: GraphError) -> GraphError {
    GraphError::MalformedInput { line: None, field: Some(field.into()), message: err.to_string() }
}

pub fn deserialize(bytes: &[u8]) -> Result<ArtefactGraph, GraphError> {
    let file: GraphFile = serde_json::from_slice(bytes).map_err(|e| GraphError::MalformedInput {
        line: Some(e.line()),
        field: None,
        message: e.to_string(),
    })?;
    if file.version != FORMAT_VERSION {
        return Err(GraphError::MalformedInput {
            line: None,
            field: Some("version".into()),
            message: format!("unsupported version {}, expected {FORMAT_VERSION}", file.version),
        });
    }
    let mut g = ArtefactGraph::new(file.dim);
    for (i, node) in file.nodes.into_iter().enumerate() {
        g.insert_node(node).map_err(|e| malformed(format!("nodes[{i}]"), e))?;
    }
    for (i, edge) in file.edges.into_iter().enumerate() {
        g.insert_edge(edge).map_err(|e| malformed(format!("edges[{i}]"), e))?;
    }
    for (k, v) in file.attributes {
        if !v.is_finite() {
            return Err(malformed(format!("attributes.{k}"), GraphError::NonFiniteValue(k)));
        }
        g.set_attribute(k, v);
    }
    g.set_generation_born(file.generation_born);
    g.set_lineage(file.lineage);
    Ok(g)
}
