use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GraphError;

/// Closed set of artefact kinds a node can represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeType {
    Code,
    Doc,
    Build,
    Compiler,
    Test,
    Schema,
    Policy,
    Ticket,
    Ui,
    Log,
    Metric,
    Data,
}

impl NodeType {
    pub const ALL: [NodeType; 12] = [
        NodeType::Code,
        NodeType::Doc,
        NodeType::Build,
        NodeType::Compiler,
        NodeType::Test,
        NodeType::Schema,
        NodeType::Policy,
        NodeType::Ticket,
        NodeType::Ui,
        NodeType::Log,
        NodeType::Metric,
        NodeType::Data,
    ];

    /// Slot of this type in the descriptor histogram.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeType::Code => "code",
            NodeType::Doc => "doc",
            NodeType::Build => "build",
            NodeType::Compiler => "compiler",
            NodeType::Test => "test",
            NodeType::Schema => "schema",
            NodeType::Policy => "policy",
            NodeType::Ticket => "ticket",
            NodeType::Ui => "ui",
            NodeType::Log => "log",
            NodeType::Metric => "metric",
            NodeType::Data => "data",
        }
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeType {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeType::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| GraphError::UnknownNodeType(s.to_string()))
    }
}

/// Typed relation between two artefacts.
///
/// `DynamicCall` is a call edge observed in runtime traces rather than
/// recovered statically; it is kept distinct from `Calls`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeType {
    Calls,
    Generates,
    DerivedFrom,
    Builds,
    Documents,
    DependsOn,
    EmitsMetric,
    DynamicCall,
}

impl EdgeType {
    pub const ALL: [EdgeType; 8] = [
        EdgeType::Calls,
        EdgeType::Generates,
        EdgeType::DerivedFrom,
        EdgeType::Builds,
        EdgeType::Documents,
        EdgeType::DependsOn,
        EdgeType::EmitsMetric,
        EdgeType::DynamicCall,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeType::Calls => "calls",
            EdgeType::Generates => "generates",
            EdgeType::DerivedFrom => "derived_from",
            EdgeType::Builds => "builds",
            EdgeType::Documents => "documents",
            EdgeType::DependsOn => "depends_on",
            EdgeType::EmitsMetric => "emits_metric",
            EdgeType::DynamicCall => "dynamic_call",
        }
    }

    /// Only dependency edges may point a node at itself.
    pub fn allows_self_loop(self) -> bool {
        matches!(self, EdgeType::DependsOn)
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeType {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EdgeType::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| GraphError::UnknownEdgeType(s.to_string()))
    }
}

/// Scalar attribute value stored on nodes and graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Bool(bool),
    Num(f64),
    Text(String),
}

impl AttrValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AttrValue::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            AttrValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            AttrValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            AttrValue::Num(v) => v.is_finite(),
            _ => true,
        }
    }
}

impl From<f64> for AttrValue {
    fn from(v: f64) -> Self {
        AttrValue::Num(v)
    }
}

impl From<bool> for AttrValue {
    fn from(v: bool) -> Self {
        AttrValue::Bool(v)
    }
}

impl From<&str> for AttrValue {
    fn from(v: &str) -> Self {
        AttrValue::Text(v.to_string())
    }
}

impl From<String> for AttrValue {
    fn from(v: String) -> Self {
        AttrValue::Text(v)
    }
}
