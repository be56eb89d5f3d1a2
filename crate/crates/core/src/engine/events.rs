use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::metrics::{check_simplex, FITNESS_DIM};
use crate::safety::SafetyPolicy;
use crate::simenv::Shock;

use super::EngineError;

/// An event as written in the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub generation: u32,
    pub kind: String,
    #[serde(flatten)]
    pub params: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    /// Overwrites the scalarization weights, optionally re-pinning them and
    /// moving the hidden KPI weights with them.
    WeightShift {
        weights: [f64; FITNESS_DIM],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pin: Option<[bool; FITNESS_DIM]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reward_weights: Option<[f64; FITNESS_DIM]>,
    },
    PolicyChange {
        policy: SafetyPolicy,
    },
    EnvironmentShock {
        #[serde(flatten)]
        shock: Shock,
    },
}

impl EventSpec {
    /// Parses and checks the event against a run of `generations` steps.
    pub fn parse(&self, generations: u32) -> Result<Event, EngineError> {
        if self.generation == 0 || self.generation > generations {
            return Err(EngineError::OutOfRangeEvent { generation: self.generation, generations });
        }
        if !matches!(self.kind.as_str(), "weight_shift" | "policy_change" | "environment_shock") {
            return Err(EngineError::UnknownEventKind(self.kind.clone()));
        }
        let mut obj: serde_json::Map<String, serde_json::Value> =
            self.params.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        obj.insert("kind".into(), serde_json::Value::String(self.kind.clone()));
        let event: Event = serde_json::from_value(serde_json::Value::Object(obj))
            .map_err(|e| EngineError::InvalidEvent { generation: self.generation, message: e.to_string() })?;
        let invalid = |message: String| EngineError::InvalidEvent { generation: self.generation, message };
        match &event {
            Event::WeightShift { weights, reward_weights, .. } => {
                check_simplex(weights).map_err(|e| invalid(e.to_string()))?;
                if let Some(r) = reward_weights {
                    check_simplex(r).map_err(|e| invalid(e.to_string()))?;
                }
            }
            Event::PolicyChange { policy } => policy.validate().map_err(|e| invalid(e.to_string()))?,
            Event::EnvironmentShock { shock } => match *shock {
                Shock::LatencySpike { factor } if !(factor.is_finite() && factor > 0.0) => {
                    return Err(invalid(format!("latency factor must be positive, got {factor}")))
                }
                Shock::Flakiness { probability } if !(0.0..=1.0).contains(&probability) => {
                    return Err(invalid(format!("flakiness must be in [0, 1], got {probability}")))
                }
                _ => {}
            },
        }
        Ok(event)
    }
}
