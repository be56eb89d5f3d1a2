//! Canned experiments with pass/fail verdicts.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::bandit::{BanditState, DEFAULT_ETA};
use crate::config::RunConfig;
use crate::engine::{AllowlistApprover, EngineConfig, EventSpec, RunResult};
use crate::metrics::{FitnessVector, FITNESS_DIM};
use crate::rng::{derive_seed, seeded_rng};
use crate::runner::{execute, RunError};
use crate::simenv::EstatePreset;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("bandit update failed: {0}")]
    Bandit(#[from] crate::bandit::BanditError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Adaptation,
    AblationWm,
    AblationCp,
    AblationNovelty,
    BanditConvergence,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Adaptation,
        Scenario::AblationWm,
        Scenario::AblationCp,
        Scenario::AblationNovelty,
        Scenario::BanditConvergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Adaptation => "adaptation",
            Scenario::AblationWm => "ablation-wm",
            Scenario::AblationCp => "ablation-cp",
            Scenario::AblationNovelty => "ablation-novelty",
            Scenario::BanditConvergence => "bandit-convergence",
        }
    }

    /// Seeds the scenario runs by default.
    pub fn default_seeds(self) -> Vec<u64> {
        match self {
            Scenario::BanditConvergence => (1..=100).collect(),
            _ => (1..=10).collect(),
        }
    }

    /// Passing seeds needed out of [`Scenario::default_seeds`].
    pub fn required(self, seeds: usize) -> usize {
        let fraction = match self {
            Scenario::Adaptation => 0.8,
            Scenario::BanditConvergence => 0.95,
            _ => 0.7,
        };
        (fraction * seeds as f64).ceil() as usize
    }

    pub fn run(self, seeds: &[u64]) -> Result<ScenarioReport, ScenarioError> {
        let outcomes = match self {
            Scenario::Adaptation => seeds.iter().map(|&s| adaptation(s)).collect::<Result<Vec<_>, _>>()?,
            Scenario::AblationWm | Scenario::AblationCp | Scenario::AblationNovelty => {
                seeds.iter().map(|&s| ablation(self, s)).collect::<Result<Vec<_>, _>>()?
            }
            Scenario::BanditConvergence => {
                seeds.iter().map(|&s| bandit_convergence(s)).collect::<Result<Vec<_>, _>>()?
            }
        };
        let passes = outcomes.iter().filter(|o| o.passed).count();
        let required = self.required(seeds.len());
        Ok(ScenarioReport { scenario: self, outcomes, passes, required, passed: passes >= required })
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| ScenarioError::UnknownScenario(s.to_string()))
    }
}

/// Result for one seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub outcomes: Vec<SeedOutcome>,
    pub passes: usize,
    pub required: usize,
    pub passed: bool,
}

impl fmt::Display for ScenarioReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for o in &self.outcomes {
            writeln!(f, "  seed {:>3}  {}  {}", o.seed, if o.passed { "ok  " } else { "miss" }, o.detail)?;
        }
        write!(
            f,
            "{}: {}/{} seeds (need {}) -> {}",
            self.scenario,
            self.passes,
            self.outcomes.len(),
            self.required,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

/// Latency-heavy weights used by the adaptation scenario.
pub const LATENCY_WEIGHTS: [f64; FITNESS_DIM] = [0.1, 0.5, 0.1, 0.1, 0.1, 0.1];
pub const SHIFT_GENERATION: u32 = 10;
/// Generations allowed for the shift to show.
pub const ADAPTATION_LAG: u32 = 3;
pub const ABLATION_GENERATIONS: u32 = 30;

fn base_config(seed: u64, generations: u32) -> RunConfig {
    let mut cfg = RunConfig::for_preset(EstatePreset::Reference);
    cfg.engine = EngineConfig { seed, generations, ..EngineConfig::default() };
    cfg
}

/// Reference run with a latency-heavy weight shift; both the scalarization
/// weights and the hidden KPI weights move.
pub fn adaptation_config(seed: u64) -> RunConfig {
    let mut cfg = base_config(seed, SHIFT_GENERATION + ADAPTATION_LAG);
    let params = [("weights", json!(LATENCY_WEIGHTS)), ("reward_weights", json!(LATENCY_WEIGHTS))]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    cfg.engine.events.push(EventSpec { generation: SHIFT_GENERATION, kind: "weight_shift".into(), params });
    cfg
}

/// Latency before and after the shift plus the security and freshness floors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptationSummary {
    pub latency_at_shift: f64,
    pub latency_after: f64,
    pub min_security: f64,
    pub min_freshness: f64,
}

impl AdaptationSummary {
    pub const MIN_SECURITY: f64 = 0.7;
    pub const MIN_FRESHNESS: f64 = 0.8;

    pub fn from_run(result: &RunResult) -> Self {
        let at = |g: u32| &result.records[(g - 1) as usize];
        let min = |f: &dyn Fn(&crate::engine::GenerationRecord) -> f64| {
            result.records.iter().map(f).fold(f64::INFINITY, f64::min)
        };
        Self {
            latency_at_shift: at(SHIFT_GENERATION).production_metrics.p,
            latency_after: at(SHIFT_GENERATION + ADAPTATION_LAG).production_metrics.p,
            min_security: min(&|r| r.production_fitness.0[2]),
            min_freshness: min(&|r| r.production_fitness.0[4]),
        }
    }

    pub fn passed(&self) -> bool {
        self.latency_after < self.latency_at_shift
            && self.min_security >= Self::MIN_SECURITY
            && self.min_freshness >= Self::MIN_FRESHNESS
    }
}

fn adaptation(seed: u64) -> Result<SeedOutcome, ScenarioError> {
    let result = execute(&adaptation_config(seed), &mut AllowlistApprover)?;
    let s = AdaptationSummary::from_run(&result);
    Ok(SeedOutcome {
        seed,
        passed: s.passed(),
        detail: format!(
            "p95 gen {} {:.2} ms, gen {} {:.2} ms; min S {:.3}; min D {:.3}",
            SHIFT_GENERATION,
            s.latency_at_shift,
            SHIFT_GENERATION + ADAPTATION_LAG,
            s.latency_after,
            s.min_security,
            s.min_freshness
        ),
    })
}

/// Full and ablated configurations at a matched seed.
pub fn ablation_configs(scenario: Scenario, seed: u64) -> (RunConfig, RunConfig) {
    let full = base_config(seed, ABLATION_GENERATIONS);
    let mut ablated = full.clone();
    let a = &mut ablated.engine.ablations;
    match scenario {
        Scenario::AblationWm => a.disable_wm = true,
        Scenario::AblationCp => a.disable_cp = true,
        Scenario::AblationNovelty => a.disable_novelty = true,
        _ => {}
    }
    (full, ablated)
}

/// The quantity each ablation compares and whether the ablated run is worse.
pub fn ablation_verdict(scenario: Scenario, full: &RunResult, ablated: &RunResult) -> (f64, f64, bool) {
    let last = |r: &RunResult| r.records.last().cloned().expect("at least one generation");
    let (f, a) = (last(full), last(ablated));
    match scenario {
        Scenario::AblationWm => (f.best_utility, a.best_utility, a.best_utility < f.best_utility),
        Scenario::AblationCp => {
            (f.production_metrics.p, a.production_metrics.p, a.production_metrics.p > f.production_metrics.p)
        }
        _ => (f.archive_size as f64, a.archive_size as f64, a.archive_size < f.archive_size),
    }
}

fn ablation(scenario: Scenario, seed: u64) -> Result<SeedOutcome, ScenarioError> {
    let (full_cfg, ablated_cfg) = ablation_configs(scenario, seed);
    let full = execute(&full_cfg, &mut AllowlistApprover)?;
    let ablated = execute(&ablated_cfg, &mut AllowlistApprover)?;
    let (f, a, passed) = ablation_verdict(scenario, &full, &ablated);
    let what = match scenario {
        Scenario::AblationWm => "final best utility",
        Scenario::AblationCp => "final production p95 ms",
        _ => "final archive size",
    };
    Ok(SeedOutcome { seed, passed, detail: format!("{what}: full {f:.4}, ablated {a:.4}") })
}

pub const BANDIT_UPDATES: usize = 2000;
pub const BANDIT_NOISE: f64 = 0.01;
pub const BANDIT_TOLERANCE: f64 = 0.1;

/// A point drawn uniformly from the probability simplex.
pub fn random_simplex<R: Rng>(rng: &mut R) -> [f64; FITNESS_DIM] {
    let mut w = [0.0; FITNESS_DIM];
    for x in &mut w {
        *x = Exp1.sample(rng);
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Runs [`BANDIT_UPDATES`] updates from uniform weights against
/// `r = w*·F + N(0, σ²)` with uniform random fitness vectors. Returns `w*`,
/// the final state, and the first update after which `w` was within
/// tolerance (if any).
pub fn bandit_trial(seed: u64) -> Result<([f64; FITNESS_DIM], BanditState, Option<usize>), ScenarioError> {
    let mut rng = seeded_rng(derive_seed(seed, &[0xBA5D]));
    let target = random_simplex(&mut rng);
    let noise = Normal::new(0.0, BANDIT_NOISE).expect("valid normal");
    let mut state = BanditState { eta: DEFAULT_ETA, ..BanditState::default() };
    let mut first_hit = None;
    for t in 1..=BANDIT_UPDATES {
        let mut f = [0.0; FITNESS_DIM];
        f.iter_mut().for_each(|x| *x = rng.random());
        let r = (crate::metrics::dot(&target, &f) + noise.sample(&mut rng)).clamp(0.0, 1.0);
        state = state.update(&FitnessVector(f), r)?;
        if first_hit.is_none() && l1(&state.w, &target) < BANDIT_TOLERANCE {
            first_hit = Some(t);
        }
    }
    Ok((target, state, first_hit))
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn bandit_convergence(seed: u64) -> Result<SeedOutcome, ScenarioError> {
    let (target, state, first_hit) = bandit_trial(seed)?;
    let gap = l1(&state.w, &target);
    let hit = first_hit.map_or("never".to_string(), |t| t.to_string());
    Ok(SeedOutcome {
        seed,
        passed: gap < BANDIT_TOLERANCE,
        detail: format!("|w - w*|_1 = {gap:.4} after {BANDIT_UPDATES} updates (first within tolerance: {hit})"),
    })
}
