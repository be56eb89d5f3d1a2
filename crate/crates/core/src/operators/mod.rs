//! Pluggable mutation operators.
//!
//! Each operator turns a graph into a [`MutationOutcome`] given a seed and an
//! [`Environment`]. The reference implementations are deterministic: the
//! same graph, seed and environment state always yield the same outcome.

mod build_weave;
mod code_patch;
mod doc_sync;
mod merge;
mod transmute;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ArtefactGraph, GraphError, LineageRecord};
use crate::metrics::MetricsError;
use crate::rng::seeded_rng;
use crate::simenv::Environment;

pub use build_weave::BuildWeave;
pub use code_patch::{patch_acceptance, CodePatch, PatchFeatures, DEFAULT_THETA};
pub use doc_sync::DocSync;
pub use merge::{
    align, merge_with_lambda, min_cost_assignment, sample_beta, weight_merge, MergeTensor, WeightMerge, ATTR_TENSOR,
    DEFAULT_ALPHA,
};
pub use transmute::{pass_rate_sequence, transmute_iterations, Transmute, TransmuteRun};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("tensor shapes {left:?} and {right:?} are incompatible")]
    ShapeMismatch { left: (usize, usize), right: (usize, usize) },
    #[error("tensor contains non-finite entries")]
    NonFiniteTensor,
    #[error("Beta concentration must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("graph has no mergeable tensor pair")]
    NoTensorPair,
    #[error("graph has no code nodes")]
    NoCodeNodes,
    #[error("graph has no doc node paired with code through a `documents` edge")]
    NoDocPairs,
    #[error("graph has no build nodes")]
    NoBuildNodes,
    #[error("graph has no legacy code nodes")]
    NoLegacyNodes,
    #[error("improvement factor {rho} cannot lift pass rate {p0} to {threshold}")]
    NonPositiveImprovement { p0: f64, rho: f64, threshold: f64 },
    #[error("every operator kind is disabled")]
    AllOperatorsDisabled,
    #[error("mutation rate {0} is outside [0, 1]")]
    InvalidMutationRate(f64),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl OperatorError {
    /// True for errors meaning "nothing to mutate here" rather than a fault.
    pub fn is_inapplicable(&self) -> bool {
        matches!(
            self,
            OperatorError::NoTensorPair
                | OperatorError::NoCodeNodes
                | OperatorError::NoDocPairs
                | OperatorError::NoBuildNodes
                | OperatorError::NoLegacyNodes
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OperatorKind {
    #[serde(rename = "WM")]
    WeightMerge,
    #[serde(rename = "CP")]
    CodePatch,
    #[serde(rename = "DS")]
    DocSync,
    #[serde(rename = "BW")]
    BuildWeave,
    #[serde(rename = "TR")]
    Transmute,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 5] = [
        OperatorKind::WeightMerge,
        OperatorKind::CodePatch,
        OperatorKind::DocSync,
        OperatorKind::BuildWeave,
        OperatorKind::Transmute,
    ];

    /// Position in [`OperatorKind::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> &'static str {
        match self {
            OperatorKind::WeightMerge => "WM",
            OperatorKind::CodePatch => "CP",
            OperatorKind::DocSync => "DS",
            OperatorKind::BuildWeave => "BW",
            OperatorKind::Transmute => "TR",
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for OperatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OperatorKind::ALL
            .into_iter()
            .find(|k| k.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown operator kind `{s}`"))
    }
}

/// Result of one operator application. On rejection `graph` is the input.
#[derive(Debug, Clone, PartialEq)]
pub struct MutationOutcome {
    pub accepted: bool,
    pub graph: ArtefactGraph,
    pub record: LineageRecord,
}

impl MutationOutcome {
    pub(crate) fn new(
        kind: OperatorKind,
        accepted: bool,
        graph: ArtefactGraph,
        acceptance_probability: f64,
        target: Option<String>,
        params: BTreeMap<String, f64>,
    ) -> Self {
        Self {
            accepted,
            graph,
            record: LineageRecord {
                generation: 0,
                operator: kind.code().to_string(),
                accepted,
                acceptance_probability,
                target,
                params,
            },
        }
    }
}

pub trait MutationOperator: Send + Sync {
    fn kind(&self) -> OperatorKind;

    fn apply(&self, graph: &ArtefactGraph, seed: u64, env: &dyn Environment) -> Result<MutationOutcome, OperatorError>;
}

/// Operator settings from the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorConfig {
    pub enable_wm: bool,
    pub enable_cp: bool,
    pub enable_ds: bool,
    pub enable_bw: bool,
    pub enable_tr: bool,
    /// Beta concentration for weight merging.
    pub alpha: f64,
    /// Logistic weights over `[1, compile_ok, static_delta, -size_penalty]`.
    pub theta: [f64; 4],
    /// Freshness a regenerated doc must reach.
    pub tau_d: f64,
    /// Simulated rebuilds per build-weave evaluation.
    pub rebuilds: usize,
    pub transmute_threshold: f64,
    pub transmute_max_iters: usize,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            enable_wm: true,
            enable_cp: true,
            enable_ds: true,
            enable_bw: true,
            enable_tr: true,
            alpha: DEFAULT_ALPHA,
            theta: DEFAULT_THETA,
            tau_d: 0.8,
            rebuilds: 4,
            transmute_threshold: 0.93,
            transmute_max_iters: 10,
        }
    }
}

impl OperatorConfig {
    pub fn enabled(&self, kind: OperatorKind) -> bool {
        match kind {
            OperatorKind::WeightMerge => self.enable_wm,
            OperatorKind::CodePatch => self.enable_cp,
            OperatorKind::DocSync => self.enable_ds,
            OperatorKind::BuildWeave => self.enable_bw,
            OperatorKind::Transmute => self.enable_tr,
        }
    }

    pub fn set_enabled(&mut self, kind: OperatorKind, on: bool) {
        match kind {
            OperatorKind::WeightMerge => self.enable_wm = on,
            OperatorKind::CodePatch => self.enable_cp = on,
            OperatorKind::DocSync => self.enable_ds = on,
            OperatorKind::BuildWeave => self.enable_bw = on,
            OperatorKind::Transmute => self.enable_tr = on,
        }
    }

    pub fn enabled_kinds(&self) -> Vec<OperatorKind> {
        OperatorKind::ALL.into_iter().filter(|&k| self.enabled(k)).collect()
    }

    /// Returns `(field, message)` for the first invalid setting.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(("alpha", format!("must be positive, got {}", self.alpha)));
        }
        if self.theta.iter().any(|t| !t.is_finite()) {
            return Err(("theta", "entries must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.tau_d) {
            return Err(("tau_d", format!("must be in [0, 1], got {}", self.tau_d)));
        }
        if self.rebuilds == 0 {
            return Err(("rebuilds", "must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.transmute_threshold) {
            return Err(("transmute_threshold", format!("must be in [0, 1], got {}", self.transmute_threshold)));
        }
        Ok(())
    }

    /// Builds the reference operator for `kind`.
    pub fn build(&self, kind: OperatorKind) -> Box<dyn MutationOperator> {
        match kind {
            OperatorKind::WeightMerge => Box::new(WeightMerge { alpha: self.alpha }),
            OperatorKind::CodePatch => Box::new(CodePatch { theta: self.theta }),
            OperatorKind::DocSync => Box::new(DocSync { tau_d: self.tau_d }),
            OperatorKind::BuildWeave => Box::new(BuildWeave { rebuilds: self.rebuilds }),
            OperatorKind::Transmute => {
                Box::new(Transmute { threshold: self.transmute_threshold, max_iters: self.transmute_max_iters })
            }
        }
    }
}

/// Registry of operators keyed by kind; custom implementations can replace
/// the reference ones.
pub struct OperatorSet {
    ops: BTreeMap<OperatorKind, Box<dyn MutationOperator>>,
}

impl OperatorSet {
    pub fn from_config(config: &OperatorConfig) -> Self {
        let ops = OperatorKind::ALL.into_iter().map(|k| (k, config.build(k))).collect();
        Self { ops }
    }

    pub fn register(&mut self, op: Box<dyn MutationOperator>) {
        self.ops.insert(op.kind(), op);
    }

    pub fn get(&self, kind: OperatorKind) -> Option<&dyn MutationOperator> {
        self.ops.get(&kind).map(Box::as_ref)
    }
}

/// One independent Bernoulli(rate) pass over the enabled kinds.
///
/// A uniform is drawn for every kind, enabled or not, so runs that differ
/// only in which kinds are enabled see the same draws for the shared kinds.
pub fn draw_ops_once<R: Rng>(rng: &mut R, enabled: &[OperatorKind], mutation_rate: f64) -> Vec<OperatorKind> {
    OperatorKind::ALL
        .into_iter()
        .filter(|k| {
            let u = rng.random::<f64>();
            enabled.contains(k) && u < mutation_rate
        })
        .collect()
}

const MAX_RESAMPLES: usize = 64;

/// Samples the operators applied to one candidate. Every candidate mutates:
/// an empty draw is redrawn.
pub fn sample_ops(seed: u64, enabled: &[OperatorKind], mutation_rate: f64) -> Result<Vec<OperatorKind>, OperatorError> {
    if enabled.is_empty() {
        return Err(OperatorError::AllOperatorsDisabled);
    }
    if !(0.0..=1.0).contains(&mutation_rate) {
        return Err(OperatorError::InvalidMutationRate(mutation_rate));
    }
    let mut rng = seeded_rng(seed);
    for _ in 0..MAX_RESAMPLES {
        let ops = draw_ops_once(&mut rng, enabled, mutation_rate);
        if !ops.is_empty() {
            return Ok(ops);
        }
    }
    // Only reachable for vanishing rates.
    Ok(vec![enabled[rng.random_range(0..enabled.len())]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_rate_selects_everything_enabled() {
        let enabled = [OperatorKind::CodePatch, OperatorKind::DocSync];
        for seed in 0..20 {
            assert_eq!(sample_ops(seed, &enabled, 1.0).unwrap(), enabled.to_vec());
        }
    }

    #[test]
    fn all_disabled_is_an_error() {
        assert_eq!(sample_ops(0, &[], 0.3), Err(OperatorError::AllOperatorsDisabled));
        let cfg = OperatorConfig {
            enable_wm: false,
            enable_cp: false,
            enable_ds: false,
            enable_bw: false,
            enable_tr: false,
            ..OperatorConfig::default()
        };
        assert!(cfg.enabled_kinds().is_empty());
    }

    #[test]
    fn zero_rate_still_mutates() {
        let ops = sample_ops(5, &OperatorKind::ALL, 0.0).unwrap();
        assert_eq!(ops.len(), 1);
    }

    #[test]
    fn out_of_range_rate() {
        assert_eq!(sample_ops(0, &OperatorKind::ALL, 1.5), Err(OperatorError::InvalidMutationRate(1.5)));
    }

    #[test]
    fn kind_codes_parse() {
        for k in OperatorKind::ALL {
            assert_eq!(k.code().parse::<OperatorKind>().unwrap(), k);
        }
        assert!("XX".parse::<OperatorKind>().is_err());
    }
}
