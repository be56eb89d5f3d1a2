//! The generation loop.
//!
//! Each generation applies scheduled events, mutates every population member
//! with sampled operators, evaluates the pool of parents plus mutants, updates
//! the bandit from the previous rollout's reward, selects survivors, and rolls
//! out the best survivor if it passes the safety gate within the risk budget.

mod events;

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::{BanditError, BanditState};
use crate::graph::{descriptor, ArtefactGraph, AttrValue, GraphError, ATTR_LATENCY_NORM};
use crate::metrics::{dot, fitness_vector, normalize_latency, FitnessVector, RawMetrics, FITNESS_DIM};
use crate::operators::{sample_ops, OperatorConfig, OperatorError, OperatorKind, OperatorSet};
use crate::rng::derive_seed;
use crate::safety::{gate, risk_estimate, within_budget, GateReport, SafetyError, SafetyPolicy};
use crate::selection::{select_qd, PoolMember, QdArchive, SelectionError, SelectionParams};
use crate::simenv::Environment;

pub use events::{Event, EventSpec};

const STREAM_OPS: u64 = 0;
const STREAM_APPLY: u64 = 1;
const STREAM_SELECT: u64 = 0x5E1EC7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("unknown event kind `{0}`")]
    UnknownEventKind(String),
    #[error("event at generation {generation} lies outside the run's 1..={generations}")]
    OutOfRangeEvent { generation: u32, generations: u32 },
    #[error("invalid event at generation {generation}: {message}")]
    InvalidEvent { generation: u32, message: String },
    #[error("invalid engine setting `{field}`: {message}")]
    InvalidConfig { field: &'static str, message: String },
    #[error("population is empty")]
    EmptyPopulation,
    #[error("generation {generation}: {source}")]
    Generation { generation: u32, source: Box<EngineError> },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Bandit(#[from] BanditError),
    #[error(transparent)]
    Safety(#[from] SafetyError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    pub disable_wm: bool,
    pub disable_cp: bool,
    pub disable_ds: bool,
    pub disable_bw: bool,
    pub disable_tr: bool,
    /// Rank-only selection (novelty weight forced to zero).
    pub disable_novelty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub n: usize,
    #[serde(rename = "T")]
    pub generations: u32,
    pub gamma: f64,
    pub mutation_rate: f64,
    pub seed: u64,
    /// Worker threads for mutation and evaluation; 0 uses every core.
    pub threads: usize,
    pub ablations: Ablations,
    pub events: Vec<EventSpec>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            n: 64,
            generations: 30,
            gamma: 0.95,
            mutation_rate: 0.3,
            seed: 42,
            threads: 0,
            ablations: Ablations::default(),
            events: Vec::new(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<Vec<(u32, Event)>, EngineError> {
        let invalid = |field, message: String| EngineError::InvalidConfig { field, message };
        if self.n == 0 {
            return Err(invalid("n", "must be at least 1".into()));
        }
        if self.generations == 0 {
            return Err(invalid("T", "must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(invalid("gamma", format!("must be in [0, 1], got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(invalid("mutation_rate", format!("must be in [0, 1], got {}", self.mutation_rate)));
        }
        self.events.iter().map(|e| Ok((e.generation, e.parse(self.generations)?))).collect()
    }
}

/// Everything the loop needs besides the estate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSettings {
    pub engine: EngineConfig,
    pub operators: OperatorConfig,
    pub selection: SelectionParams,
    pub archive_capacity: usize,
    pub archive_k: usize,
    pub bandit: BanditState,
    pub safety: SafetyPolicy,
}

impl RunSettings {
    pub fn new(engine: EngineConfig) -> Self {
        Self {
            engine,
            archive_capacity: crate::selection::DEFAULT_CAPACITY,
            archive_k: crate::selection::DEFAULT_K,
            ..Self::default()
        }
    }

    fn effective_operators(&self) -> OperatorConfig {
        let mut ops = self.operators.clone();
        let a = &self.engine.ablations;
        for (kind, off) in [
            (OperatorKind::WeightMerge, a.disable_wm),
            (OperatorKind::CodePatch, a.disable_cp),
            (OperatorKind::DocSync, a.disable_ds),
            (OperatorKind::BuildWeave, a.disable_bw),
            (OperatorKind::Transmute, a.disable_tr),
        ] {
            if off {
                ops.set_enabled(kind, false);
            }
        }
        ops
    }

    fn effective_selection(&self) -> SelectionParams {
        let mut params = self.selection;
        if self.engine.ablations.disable_novelty {
            params.beta_nov = 0.0;
        }
        params
    }
}

/// Asks whether a gated candidate may be rolled out.
pub trait Approver {
    fn approve(&mut self, generation: u32, candidate: &Candidate, report: &GateReport) -> bool;
}

/// Batch approval from the policy's allowlist of generations.
#[derive(Debug, Clone, Copy, Default)]
pub struct AllowlistApprover;

impl Approver for AllowlistApprover {
    fn approve(&mut self, _generation: u32, _candidate: &Candidate, _report: &GateReport) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: String,
    pub graph: ArtefactGraph,
}

#[derive(Debug, Clone, PartialEq)]
struct Evaluated {
    candidate: Candidate,
    raw: RawMetrics,
    fitness: FitnessVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: u32,
    /// Events applied at the start of this generation.
    pub events: Vec<Event>,
    pub pool_ids: Vec<String>,
    pub pool_fitness: Vec<FitnessVector>,
    pub population_ids: Vec<String>,
    /// Pool members on the first Pareto front.
    pub front_size: usize,
    /// Scalarization weights used for this generation's choice of best.
    pub weights: [f64; FITNESS_DIM],
    pub bandit_updated: bool,
    pub best_id: String,
    pub best_fitness: FitnessVector,
    pub best_utility: f64,
    pub mean_utility: f64,
    pub gate: GateReport,
    pub risk_estimate: f64,
    pub rolled_out: bool,
    pub reward: Option<f64>,
    pub production_id: String,
    pub production_metrics: RawMetrics,
    pub production_fitness: FitnessVector,
    pub archive_size: usize,
    pub accepted_mutations: usize,
    pub discounted_return: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutState {
    pub current: Candidate,
    /// `(generation, candidate, gate report)` for every rollout.
    pub history: Vec<(u32, Candidate, GateReport)>,
    pub discounted_return: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<GenerationRecord>,
    pub archive: QdArchive,
    pub rollout: RolloutState,
    pub population: Vec<Candidate>,
}

/// `argmax w·F`, ties to the lexicographically larger fitness, then the
/// smaller id.
pub fn best<'a>(
    population: &'a [(Candidate, FitnessVector)],
    w: &[f64; FITNESS_DIM],
) -> Result<&'a (Candidate, FitnessVector), EngineError> {
    population
        .iter()
        .max_by(|a, b| {
            let ua = dot(w, &a.1 .0);
            let ub = dot(w, &b.1 .0);
            ua.total_cmp(&ub)
                .then_with(|| {
                    a.1 .0
                        .iter()
                        .zip(&b.1 .0)
                        .map(|(x, y)| x.total_cmp(y))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .then_with(|| b.0.id.cmp(&a.0.id))
        })
        .ok_or(EngineError::EmptyPopulation)
}

fn evaluate(candidate: Candidate, env: &dyn Environment) -> Evaluated {
    let raw = env.metrics(&candidate.graph);
    let bounds = env.bounds();
    let fitness = fitness_vector(&raw, &bounds);
    let graph = candidate.graph.with_attribute(ATTR_LATENCY_NORM, AttrValue::Num(normalize_latency(raw.p, &bounds)));
    Evaluated { candidate: Candidate { id: candidate.id, graph }, raw, fitness }
}

#[allow(clippy::too_many_arguments)]
fn mutate(
    parent: &Candidate,
    id: String,
    generation: u32,
    seed: u64,
    ops: &OperatorSet,
    enabled: &[OperatorKind],
    mutation_rate: f64,
    env: &dyn Environment,
) -> Result<(Candidate, usize), EngineError> {
    let kinds = sample_ops(derive_seed(seed, &[STREAM_OPS]), enabled, mutation_rate)?;
    let mut graph = parent.graph.with_generation_born(generation);
    let mut accepted = 0;
    for kind in kinds {
        let Some(op) = ops.get(kind) else { continue };
        match op.apply(&graph, derive_seed(seed, &[STREAM_APPLY, kind.index() as u64]), env) {
            Ok(outcome) => {
                let mut record = outcome.record;
                record.generation = generation;
                accepted += usize::from(outcome.accepted);
                graph = outcome.graph.with_lineage(record);
            }
            Err(e) if e.is_inapplicable() => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok((Candidate { id, graph }, accepted))
}

/// Runs the loop from `g0` against `env`.
pub fn run<E: Environment>(
    settings: &RunSettings,
    g0: &ArtefactGraph,
    env: &mut E,
    approver: &mut dyn Approver,
) -> Result<RunResult, EngineError> {
    let cfg = &settings.engine;
    let mut events = cfg.validate()?;
    events.sort_by_key(|(g, _)| *g);
    settings.bandit.validate()?;
    settings.safety.validate()?;
    settings.selection.validate()?;
    let op_config = settings.effective_operators();
    op_config.validate().map_err(|(field, message)| EngineError::InvalidConfig { field, message })?;
    let enabled = op_config.enabled_kinds();
    let ops = OperatorSet::from_config(&op_config);
    let params = settings.effective_selection();
    let pool_threads = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| EngineError::InvalidConfig { field: "threads", message: e.to_string() })?;

    let mut bandit = settings.bandit.clone();
    let mut policy = settings.safety.clone();
    let mut archive = QdArchive::new(settings.archive_capacity, settings.archive_k)?;
    let origin = Candidate { id: "g0".into(), graph: g0.clone() };
    let mut population: Vec<Candidate> =
        (0..cfg.n).map(|i| Candidate { id: format!("g0-{i}"), graph: g0.clone() }).collect();
    let mut rollout = RolloutState { current: origin, history: Vec::new(), discounted_return: 0.0 };
    let mut window: VecDeque<GateReport> = VecDeque::new();
    let mut last_reward: Option<(FitnessVector, f64)> = None;
    let mut records = Vec::with_capacity(cfg.generations as usize);

    for generation in 1..=cfg.generations {
        let wrap = |e: EngineError| EngineError::Generation { generation, source: Box::new(e) };

        let mut applied = Vec::new();
        for (_, event) in events.iter().filter(|(g, _)| *g == generation) {
            match event {
                Event::WeightShift { weights, pin, reward_weights } => {
                    bandit.w = *weights;
                    // The pending reward was earned under the old weights.
                    last_reward = None;
                    if let Some(pin) = pin {
                        bandit.pinned = *pin;
                    }
                    if let Some(r) = reward_weights {
                        env.set_reward_weights(*r);
                    }
                }
                Event::PolicyChange { policy: p } => policy = p.clone(),
                Event::EnvironmentShock { shock } => env.apply_shock(shock),
            }
            applied.push(event.clone());
        }
        let env_ref: &E = env;

        let mutated: Vec<Result<(Candidate, usize), EngineError>> = pool_threads.install(|| {
            population
                .par_iter()
                .enumerate()
                .map(|(i, parent)| {
                    let seed = derive_seed(cfg.seed, &[u64::from(generation), i as u64]);
                    mutate(
                        parent,
                        format!("g{generation}-{i}"),
                        generation,
                        seed,
                        &ops,
                        &enabled,
                        cfg.mutation_rate,
                        env_ref,
                    )
                })
                .collect()
        });
        let mut mutants = Vec::with_capacity(cfg.n);
        let mut accepted_mutations = 0;
        for m in mutated {
            let (c, a) = m.map_err(wrap)?;
            accepted_mutations += a;
            mutants.push(c);
        }

        let pool: Vec<Evaluated> = pool_threads.install(|| {
            population.par_iter().cloned().chain(mutants.into_par_iter()).map(|c| evaluate(c, env_ref)).collect()
        });

        let mut bandit_updated = false;
        if let Some((f, r)) = last_reward.take() {
            bandit = bandit.update(&f, r).map_err(|e| wrap(e.into()))?;
            bandit_updated = true;
        }

        let members: Vec<PoolMember> = pool
            .iter()
            .map(|e| PoolMember {
                id: e.candidate.id.clone(),
                fitness: e.fitness,
                descriptor: descriptor(&e.candidate.graph).to_vec(),
            })
            .collect();
        let selection = select_qd(
            &members,
            cfg.n,
            &params,
            &archive,
            derive_seed(cfg.seed, &[u64::from(generation), STREAM_SELECT]),
        )
        .map_err(|e| wrap(e.into()))?;
        archive = selection.archive.clone();
        let survivors: Vec<(Candidate, FitnessVector)> =
            selection.survivors.iter().map(|&i| (pool[i].candidate.clone(), pool[i].fitness)).collect();

        let w = bandit.w;
        let (best_candidate, best_fitness) = best(&survivors, &w).map_err(wrap)?.clone();
        let utilities: Vec<f64> = survivors.iter().map(|(_, f)| dot(&w, &f.0)).collect();
        let best_utility = dot(&w, &best_fitness.0);
        let mean_utility = utilities.iter().sum::<f64>() / utilities.len() as f64;

        let provisional =
            gate(&best_candidate.graph, &rollout.current.graph, &policy, env_ref, true).map_err(|e| wrap(e.into()))?;
        let approved = !policy.require_approval
            || policy.approved_generations.contains(&generation)
            || (provisional.passed && approver.approve(generation, &best_candidate, &provisional));
        let report = gate(&best_candidate.graph, &rollout.current.graph, &policy, env_ref, approved)
            .map_err(|e| wrap(e.into()))?;
        window.push_back(report);
        while window.len() > policy.risk_window {
            window.pop_front();
        }
        let estimate = risk_estimate(window.make_contiguous()).map_err(|e| wrap(e.into()))?;
        // Promoting a candidate identical to production deploys nothing.
        let changed = !best_candidate.graph.same_content(&rollout.current.graph);
        let rolled_out = changed && report.passed && within_budget(estimate, policy.delta);

        let mut reward = None;
        if rolled_out {
            let r = env_ref.reward(&best_candidate.graph);
            reward = Some(r);
            last_reward = Some((best_fitness, r));
            rollout.history.push((generation, best_candidate.clone(), report));
            rollout.current = best_candidate.clone();
        }

        let production_metrics = env_ref.metrics(&rollout.current.graph);
        let production_fitness = fitness_vector(&production_metrics, &env_ref.bounds());
        let exponent = i32::try_from(generation - 1).unwrap_or(i32::MAX);
        rollout.discounted_return += cfg.gamma.powi(exponent) * dot(&w, &production_fitness.0);

        population = survivors.into_iter().map(|(c, _)| c).collect();
        records.push(GenerationRecord {
            generation,
            events: applied,
            pool_ids: members.iter().map(|m| m.id.clone()).collect(),
            pool_fitness: members.iter().map(|m| m.fitness).collect(),
            population_ids: population.iter().map(|c| c.id.clone()).collect(),
            front_size: selection.ranks.iter().filter(|&&r| r == 0).count(),
            weights: w,
            bandit_updated,
            best_id: best_candidate.id.clone(),
            best_fitness,
            best_utility,
            mean_utility,
            gate: report,
            risk_estimate: estimate,
            rolled_out,
            reward,
            production_id: rollout.current.id.clone(),
            production_metrics,
            production_fitness,
            archive_size: archive.len(),
            accepted_mutations,
            discounted_return: rollout.discounted_return,
        });
    }

    Ok(RunResult { records, archive, rollout, population })
}
