//! Graph-based evolution of software estates.
//!
//! Candidate estates are typed artefact graphs. Each generation mutates a
//! population with pluggable operators, scores every candidate with a
//! six-component fitness vector, adapts the scalarization weights from
//! rollout rewards, keeps a quality-diversity archive, and promotes the best
//! candidate only when it passes a conjunctive safety gate.

pub mod bandit;
pub mod config;
pub mod engine;
pub mod graph;
pub mod metrics;
pub mod operators;
pub mod rng;
pub mod runner;
pub mod safety;
pub mod scenarios;
pub mod selection;
pub mod simenv;
