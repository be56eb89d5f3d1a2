//! Rollout gate, behavioral drift and empirical risk accounting.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::ArtefactGraph;
use crate::simenv::Environment;

pub const DEFAULT_RISK_WINDOW: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SafetyError {
    #[error("environment defines no behavioral probes")]
    NoProbes,
    #[error("probe vectors differ in length ({0} vs {1})")]
    ProbeLengthMismatch(usize, usize),
    #[error("risk window is empty")]
    EmptyWindow,
    #[error("invalid safety policy field `{field}`: {message}")]
    InvalidPolicy { field: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyPolicy {
    pub tau_test: f64,
    /// Latency bound in milliseconds.
    pub p_max: f64,
    /// Maximum fraction of probes allowed to change outcome.
    pub epsilon: f64,
    /// Risk budget: rollouts stop while the trailing failure rate exceeds it.
    pub delta: f64,
    pub require_approval: bool,
    /// Nodes that may not change, in addition to nodes flagged `locked`.
    pub locked_node_ids: BTreeSet<String>,
    /// Generations whose rollout is pre-approved in batch mode.
    pub approved_generations: BTreeSet<u32>,
    pub risk_window: usize,
}

impl Default for SafetyPolicy {
    fn default() -> Self {
        Self {
            tau_test: 0.9,
            p_max: 400.0,
            epsilon: 0.05,
            delta: 0.2,
            require_approval: false,
            locked_node_ids: BTreeSet::new(),
            approved_generations: BTreeSet::new(),
            risk_window: DEFAULT_RISK_WINDOW,
        }
    }
}

impl SafetyPolicy {
    pub fn validate(&self) -> Result<(), SafetyError> {
        let unit = |field: &'static str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SafetyError::InvalidPolicy { field, message: format!("must be in [0, 1], got {v}") })
            }
        };
        unit("tau_test", self.tau_test)?;
        unit("epsilon", self.epsilon)?;
        unit("delta", self.delta)?;
        if !(self.p_max.is_finite() && self.p_max > 0.0) {
            return Err(SafetyError::InvalidPolicy {
                field: "p_max",
                message: format!("must be positive, got {}", self.p_max),
            });
        }
        if self.risk_window == 0 {
            return Err(SafetyError::InvalidPolicy { field: "risk_window", message: "must be at least 1".into() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateClauses {
    pub tests: bool,
    pub contracts: bool,
    pub latency: bool,
    pub drift: bool,
    pub locks: bool,
    pub approval: bool,
}

impl GateClauses {
    pub fn all(&self) -> bool {
        self.tests && self.contracts && self.latency && self.drift && self.locks && self.approval
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateMeasurements {
    pub test_rate: f64,
    pub contracts_ok: bool,
    pub latency_ms: f64,
    pub drift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub passed: bool,
    pub clause_results: GateClauses,
    pub measured: GateMeasurements,
}

/// Fraction of probes whose outcome differs between the two graphs.
pub fn drift(candidate: &ArtefactGraph, current: &ArtefactGraph, env: &dyn Environment) -> Result<f64, SafetyError> {
    let a = env.probes(candidate);
    let b = env.probes(current);
    if a.is_empty() && b.is_empty() {
        return Err(SafetyError::NoProbes);
    }
    if a.len() != b.len() {
        return Err(SafetyError::ProbeLengthMismatch(a.len(), b.len()));
    }
    let differing = a.iter().zip(&b).filter(|(x, y)| x != y).count();
    Ok(differing as f64 / a.len() as f64)
}

/// True if some node locked in `current` (by flag or by policy) is missing
/// or different in `candidate`.
pub fn touches_locked(candidate: &ArtefactGraph, current: &ArtefactGraph, policy: &SafetyPolicy) -> bool {
    current
        .nodes()
        .filter(|n| n.locked || policy.locked_node_ids.contains(&n.id))
        .any(|n| candidate.node(&n.id) != Some(n))
}

/// Evaluates every clause, even after one fails, so the report is complete.
pub fn gate(
    candidate: &ArtefactGraph,
    current: &ArtefactGraph,
    policy: &SafetyPolicy,
    env: &dyn Environment,
    approved: bool,
) -> Result<GateReport, SafetyError> {
    let test_rate = env.test_pass_rate(candidate);
    let contracts_ok = env.contracts(candidate).iter().all(|&c| c);
    let latency_ms = env.metrics(candidate).p;
    let drift = drift(candidate, current, env)?;
    let clause_results = GateClauses {
        tests: test_rate >= policy.tau_test,
        contracts: contracts_ok,
        latency: latency_ms <= policy.p_max,
        drift: drift <= policy.epsilon,
        locks: !touches_locked(candidate, current, policy),
        approval: !policy.require_approval || approved,
    };
    Ok(GateReport {
        passed: clause_results.all(),
        clause_results,
        measured: GateMeasurements { test_rate, contracts_ok, latency_ms, drift },
    })
}

/// Empirical pass fraction over the reports in the window.
pub fn risk_estimate(history: &[GateReport]) -> Result<f64, SafetyError> {
    if history.is_empty() {
        return Err(SafetyError::EmptyWindow);
    }
    Ok(history.iter().filter(|r| r.passed).count() as f64 / history.len() as f64)
}

/// True while the trailing failure rate stays within the risk budget.
pub fn within_budget(estimate: f64, delta: f64) -> bool {
    1.0 - estimate <= delta
}
