//! Runs a configured experiment and writes its outputs.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::config::RunConfig;
use crate::engine::{run, Approver, EngineError, GenerationRecord, RunResult};
use crate::graph::ArtefactGraph;
use crate::simenv::{generate_estate, EstateEnv, SimEnvError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Estate(#[from] SimEnvError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("writing {path}: {source}")]
    Output { path: PathBuf, source: io::Error },
}

/// Builds the estate named by the configuration.
pub fn build_estate(config: &RunConfig) -> Result<(ArtefactGraph, EstateEnv), SimEnvError> {
    let (g0, mut env) = generate_estate(&config.estate.spec, config.estate_seed())?;
    env.set_bounds(config.metrics);
    Ok((g0, env))
}

/// Generates the estate and runs the engine on it.
pub fn execute(config: &RunConfig, approver: &mut dyn Approver) -> Result<RunResult, RunError> {
    let (g0, mut env) = build_estate(config)?;
    Ok(run(&config.settings(), &g0, &mut env, approver)?)
}

/// One row of `metrics.csv`.
#[derive(Debug, Serialize)]
struct MetricsRow {
    gen: u32,
    best_utility: f64,
    mean_utility: f64,
    w_u: f64,
    w_p: f64,
    w_s: f64,
    w_b: f64,
    w_d: f64,
    w_c: f64,
    gate_passed: bool,
    rolled_out: bool,
    archive_size: usize,
    discounted_return: f64,
}

impl From<&GenerationRecord> for MetricsRow {
    fn from(r: &GenerationRecord) -> Self {
        let [w_u, w_p, w_s, w_b, w_d, w_c] = r.weights;
        Self {
            gen: r.generation,
            best_utility: r.best_utility,
            mean_utility: r.mean_utility,
            w_u,
            w_p,
            w_s,
            w_b,
            w_d,
            w_c,
            gate_passed: r.gate.passed,
            rolled_out: r.rolled_out,
            archive_size: r.archive_size,
            discounted_return: r.discounted_return,
        }
    }
}

pub const METRICS_HEADER: [&str; 13] = [
    "gen",
    "best_utility",
    "mean_utility",
    "w_U",
    "w_P",
    "w_S",
    "w_B",
    "w_D",
    "w_C",
    "gate_passed",
    "rolled_out",
    "archive_size",
    "discounted_return",
];

pub fn metrics_csv(records: &[GenerationRecord]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(METRICS_HEADER).expect("in-memory write");
    for r in records {
        w.serialize(MetricsRow::from(r)).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// One JSON object per generation.
pub fn events_jsonl(records: &[GenerationRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("record serializes");
        out.push(b'\n');
    }
    out
}

pub fn archive_json(result: &RunResult) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(result.archive.entries()).expect("archive serializes");
    out.push(b'\n');
    out
}

/// Paths written by [`write_outputs`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFiles {
    pub metrics: PathBuf,
    pub events: PathBuf,
    pub archive: PathBuf,
    pub config: PathBuf,
}

/// Writes metrics, event log, archive dump and the effective config into `dir`.
pub fn write_outputs(dir: &Path, config: &RunConfig, result: &RunResult) -> Result<OutputFiles, RunError> {
    let files = OutputFiles {
        metrics: dir.join(&config.output.metrics),
        events: dir.join(&config.output.events),
        archive: dir.join(&config.output.archive),
        config: dir.join(&config.output.config),
    };
    fs::create_dir_all(dir).map_err(|source| RunError::Output { path: dir.to_path_buf(), source })?;
    write_file(&files.metrics, &metrics_csv(&result.records))?;
    write_file(&files.events, &events_jsonl(&result.records))?;
    write_file(&files.archive, &archive_json(result))?;
    write_file(&files.config, config.to_toml().as_bytes())?;
    Ok(files)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let wrap = |source| RunError::Output { path: path.to_path_buf(), source };
    let mut f = BufWriter::new(fs::File::create(path).map_err(wrap)?);
    f.write_all(bytes).map_err(wrap)?;
    f.flush().map_err(wrap)
}
