//! Command implementations behind the `evograph` binary.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use evograph::config::{ConfigError, RunConfig};
use evograph::engine::{AllowlistApprover, Approver, Candidate};
use evograph::runner::{execute, write_outputs};
use evograph::safety::GateReport;
use evograph::scenarios::Scenario;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Options shared by `run` and `validate`.
#[derive(Debug, Clone, Default)]
pub struct ConfigArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<RunConfig, ConfigError> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("engine.seed={seed}"));
        }
        RunConfig::load(&self.config, &overrides)
    }
}

/// Prompts on `output` and reads y/n answers from `input`.
pub struct PromptApprover<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> PromptApprover<R, W> {
    pub fn new(input: R, output: W) -> Self {
        Self { input, output }
    }
}

impl<R: BufRead, W: Write> Approver for PromptApprover<R, W> {
    fn approve(&mut self, generation: u32, candidate: &Candidate, report: &GateReport) -> bool {
        let m = &report.measured;
        let _ = write!(
            self.output,
            "generation {generation}: roll out {} (tests {:.3}, p95 {:.1} ms, drift {:.3})? [y/N] ",
            candidate.id, m.test_rate, m.latency_ms, m.drift
        );
        let _ = self.output.flush();
        let mut line = String::new();
        match self.input.read_line(&mut line) {
            Ok(n) if n > 0 => matches!(line.trim().to_ascii_lowercase().as_str(), "y" | "yes"),
            _ => false,
        }
    }
}

fn report_config_error(err: &ConfigError, stderr: &mut dyn Write) -> i32 {
    let _ = writeln!(stderr, "error: {err}");
    EXIT_CONFIG
}

/// Loads, runs and writes outputs into `out` (or the config's output dir).
pub fn cmd_run(
    args: &ConfigArgs,
    out: Option<&Path>,
    approver: Option<&mut dyn Approver>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32 {
    let config = match args.load() {
        Ok(c) => c,
        Err(e) => return report_config_error(&e, stderr),
    };
    let mut batch = AllowlistApprover;
    let approver = approver.unwrap_or(&mut batch);
    let result = match execute(&config, approver) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}: {e}", args.config.display());
            return EXIT_RUNTIME;
        }
    };
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| config.output.dir.clone());
    match write_outputs(&dir, &config, &result) {
        Ok(files) => {
            let last = result.records.last();
            let _ = writeln!(
                stdout,
                "{} generations, {} rollouts, final best utility {:.4}, discounted return {:.4}",
                result.records.len(),
                result.rollout.history.len(),
                last.map_or(0.0, |r| r.best_utility),
                result.rollout.discounted_return
            );
            for path in [files.metrics, files.events, files.archive, files.config] {
                let _ = writeln!(stdout, "wrote {}", path.display());
            }
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

/// Runs a canned scenario and prints per-seed lines and the verdict.
/// Exits 0 when the run completes, whatever the verdict.
pub fn cmd_scenario(name: &str, seeds: Option<Vec<u64>>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let scenario: Scenario = match name.parse() {
        Ok(s) => s,
        Err(e) => {
            let names: Vec<&str> = Scenario::ALL.iter().map(|s| s.name()).collect();
            let _ = writeln!(stderr, "error: {e} (known: {})", names.join(", "));
            return EXIT_CONFIG;
        }
    };
    let seeds = seeds.unwrap_or_else(|| scenario.default_seeds());
    match scenario.run(&seeds) {
        Ok(report) => {
            let _ = writeln!(stdout, "{report}");
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

/// Parses and validates only; prints the effective configuration.
pub fn cmd_validate(args: &ConfigArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    match args.load() {
        Ok(config) => {
            let _ = write!(stdout, "{}", config.to_toml());
            EXIT_OK
        }
        Err(e) => report_config_error(&e, stderr),
    }
}
