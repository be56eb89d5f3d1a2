use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ArtefactGraph, ArtefactNode, AttrValue, Edge, GraphError};

/// Content difference between two graphs. Lineage and birth generation are
/// not part of the delta.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphDelta {
    pub nodes_added: Vec<ArtefactNode>,
    pub nodes_removed: Vec<String>,
    /// Nodes present on both sides whose content changed, in their new form.
    pub nodes_changed: Vec<ArtefactNode>,
    pub edges_added: Vec<Edge>,
    pub edges_removed: Vec<Edge>,
    pub attributes_set: BTreeMap<String, AttrValue>,
    pub attributes_removed: Vec<String>,
}

impl GraphDelta {
    pub fn is_empty(&self) -> bool {
        self.nodes_added.is_empty()
            && self.nodes_removed.is_empty()
            && self.nodes_changed.is_empty()
            && self.edges_added.is_empty()
            && self.edges_removed.is_empty()
            && self.attributes_set.is_empty()
            && self.attributes_removed.is_empty()
    }

    /// Ids of nodes the delta touches in any way.
    pub fn touched_nodes(&self) -> impl Iterator<Item = &str> {
        self.nodes_added
            .iter()
            .chain(&self.nodes_changed)
            .map(|n| n.id.as_str())
            .chain(self.nodes_removed.iter().map(String::as_str))
    }

    /// Applies the delta to `base`, returning a new graph.
    pub fn apply(&self, base: &ArtefactGraph) -> Result<ArtefactGraph, GraphError> {
        let mut g = base.clone();
        for e in &self.edges_removed {
            g.remove_edge(e);
        }
        for id in &self.nodes_removed {
            g.remove_node(id)?;
        }
        for node in &self.nodes_changed {
            g.replace_node(node.clone())?;
        }
        for node in &self.nodes_added {
            g.insert_node(node.clone())?;
        }
        for e in &self.edges_added {
            g.insert_edge(e.clone())?;
        }
        for key in &self.attributes_removed {
            g.remove_attribute(key);
        }
        for (k, v) in &self.attributes_set {
            g.set_attribute(k.clone(), v.clone());
        }
        Ok(g)
    }
}

pub fn diff(a: &ArtefactGraph, b: &ArtefactGraph) -> GraphDelta {
    let mut delta = GraphDelta::default();
    for node in b.nodes() {
        match a.node(&node.id) {
            None => delta.nodes_added.push(node.clone()),
            Some(old) if old != node => delta.nodes_changed.push(node.clone()),
            Some(_) => {}
        }
    }
    delta.nodes_removed = a.nodes().filter(|n| !b.contains(&n.id)).map(|n| n.id.clone()).collect();
    delta.edges_added = b.edges.difference(&a.edges).cloned().collect();
    // Edges incident to removed nodes disappear with the node.
    delta.edges_removed =
        a.edges.difference(&b.edges).filter(|e| b.contains(&e.src) && b.contains(&e.dst)).cloned().collect();
    for (k, v) in b.attributes() {
        if a.attribute(k) != Some(v) {
            delta.attributes_set.insert(k.clone(), v.clone());
        }
    }
    delta.attributes_removed = a.attributes().keys().filter(|k| b.attribute(k).is_none()).cloned().collect();
    delta
}
