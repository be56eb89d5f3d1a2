use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::embedding::{pseudo_embedding, text_embedding, tokenize};
use super::{AttrValue, NodeType};

/// Attribute holding a doc node's text.
pub const ATTR_TEXT: &str = "text";

/// One artefact: a source unit, a document, a build script, a ticket, ...
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtefactNode {
    pub id: String,
    #[serde(rename = "type")]
    pub node_type: NodeType,
    pub embedding: Vec<f64>,
    #[serde(default)]
    pub attributes: BTreeMap<String, AttrValue>,
    #[serde(default)]
    pub locked: bool,
}

impl ArtefactNode {
    /// Creates a node with a pseudo-embedding of dimension `dim`.
    pub fn new(id: impl Into<String>, node_type: NodeType, dim: usize) -> Self {
        let mut node =
            Self { id: id.into(), node_type, embedding: vec![0.0; dim], attributes: BTreeMap::new(), locked: false };
        node.refresh_embedding();
        node
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<AttrValue>) -> Self {
        self.attributes.insert(key.into(), value.into());
        self.refresh_embedding();
        self
    }

    pub fn with_embedding(mut self, embedding: Vec<f64>) -> Self {
        self.embedding = embedding;
        self
    }

    pub fn locked(mut self, locked: bool) -> Self {
        self.locked = locked;
        self
    }

    /// Sets an attribute in place and re-derives the embedding.
    pub fn set_attr(&mut self, key: impl Into<String>, value: impl Into<AttrValue>) {
        self.attributes.insert(key.into(), value.into());
        self.refresh_embedding();
    }

    /// Recomputes the embedding from current content, keeping the dimension.
    ///
    /// Doc nodes with text embed their tokens; everything else embeds id and
    /// attributes.
    pub fn refresh_embedding(&mut self) {
        let dim = self.embedding.len();
        self.embedding = match (self.node_type, self.text()) {
            (NodeType::Doc, Some(text)) => text_embedding(&tokenize(text), dim),
            _ => pseudo_embedding(&self.id, &self.attributes, dim),
        };
    }

    pub fn attr(&self, key: &str) -> Option<&AttrValue> {
        self.attributes.get(key)
    }

    pub fn num(&self, key: &str) -> Option<f64> {
        self.attributes.get(key).and_then(AttrValue::as_f64)
    }

    pub fn flag(&self, key: &str) -> Option<bool> {
        self.attributes.get(key).and_then(AttrValue::as_bool)
    }

    pub fn str_attr(&self, key: &str) -> Option<&str> {
        self.attributes.get(key).and_then(AttrValue::as_str)
    }

    pub fn text(&self) -> Option<&str> {
        self.str_attr(ATTR_TEXT)
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.embedding.iter().all(|x| x.is_finite()) && self.attributes.values().all(AttrValue::is_finite)
    }
}
