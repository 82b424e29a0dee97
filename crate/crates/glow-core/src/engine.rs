//! The gossip simulation loop.
//!
//! Each iteration designates one head agent: the head trains on its local
//! shard, pulls its neighbors' current weights, and replaces its own model
//! with the example-count-weighted average of the trained model and the
//! neighbor models. Nothing is pushed back to the neighbors, so a single
//! step mutates only the head. A communication round is one pass in which
//! every agent has been head once; all agents are evaluated on the shared
//! test set at the end of every round.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{self, DataError, DataShard, Dataset};
use crate::learner::{self, EvalResult, LearnerError, LearnerSpec, WeightVector};
use crate::parallel;
use crate::reporting::MetricsRecord;
use crate::seeds;
use crate::topology::{AgentId, AgentProfile, Role, Topology};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("aggregation over an empty entry list")]
    EmptyAggregation,
    #[error("aggregation inputs have mismatched shapes")]
    ShapeMismatch,
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// How the head of each iteration is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadPolicy {
    RoundRobin,
    Random,
}

impl std::fmt::Display for HeadPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HeadPolicy::RoundRobin => "round_robin",
            HeadPolicy::Random => "random",
        })
    }
}

impl std::str::FromStr for HeadPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "round_robin" => Ok(HeadPolicy::RoundRobin),
            "random" => Ok(HeadPolicy::Random),
            other => Err(format!("unknown head policy `{other}`")),
        }
    }
}

/// Everything a gossip run needs besides the dataset itself.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub topology: Topology,
    pub learner: LearnerSpec,
    pub communication_rounds: u32,
    pub local_epochs: u32,
    pub head_policy: HeadPolicy,
    pub master_seed: u64,
}

impl SimConfig {
    fn describe(&self) -> String {
        format!(
            "system=glow topology={} agents={} rounds={} local_epochs={} head_policy={} learner={} seed={}",
            self.topology.label,
            self.topology.total_agents(),
            self.communication_rounds,
            self.local_epochs,
            self.head_policy,
            self.learner.family,
            self.master_seed,
        )
    }
}

/// One agent's live state during a run.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub profile: AgentProfile,
    pub weights: WeightVector,
    pub shard: DataShard,
}

impl AgentState {
    /// Aggregation weight of this agent: its local example count.
    pub fn example_count(&self) -> u64 {
        self.shard.len() as u64
    }
}

/// Outcome of a finished run.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub metrics: Vec<MetricsRecord>,
    /// Final-round evaluation per evaluated model, in agent order.
    pub final_evals: Vec<(AgentId, Role, EvalResult)>,
    /// Final weights, index-aligned with `final_evals`.
    pub final_weights: Vec<WeightVector>,
    pub config_snapshot: String,
}

/// Head of `iteration`: round-robin takes the iteration modulo the agent
/// count; random draws uniformly, deterministic in (seed, iteration).
pub fn select_head(policy: HeadPolicy, iteration: u64, total_agents: usize, seed: u64) -> AgentId {
    match policy {
        HeadPolicy::RoundRobin => AgentId((iteration % total_agents as u64) as usize),
        HeadPolicy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::head_seed(seed, iteration));
            AgentId(rng.gen_range(0..total_agents))
        }
    }
}

/// Result of a weighted aggregation.
#[derive(Debug, Clone, PartialEq)]
pub enum Aggregated {
    Combined(WeightVector),
    /// All entry counts were zero: the caller keeps its current weights.
    Keep,
}

/// Element-wise weighted mean of the entries with their counts as weights.
/// A zero total count yields [`Aggregated::Keep`] instead of a division by
/// zero, so all-empty neighborhoods are harmless.
pub fn aggregate(entries: &[(&WeightVector, u64)]) -> Result<Aggregated, EngineError> {
    let (first, _) = entries.first().ok_or(EngineError::EmptyAggregation)?;
    if entries.iter().any(|(w, _)| !w.same_shapes(first)) {
        return Err(EngineError::ShapeMismatch);
    }
    let total: u64 = entries.iter().map(|&(_, c)| c).sum();
    if total == 0 {
        return Ok(Aggregated::Keep);
    }
    if entries.len() == 1 {
        return Ok(Aggregated::Combined((*first).clone()));
    }
    let mut acc = first.zeros_like();
    for &(w, count) in entries {
        if count > 0 {
            acc.add_scaled(w, count as f64);
        }
    }
    acc.scale(1.0 / total as f64);
    Ok(Aggregated::Combined(acc))
}

/// Build the initial agent states: per-agent seeded weights and the IID
/// partition implied by the topology's roles.
pub fn init_states(cfg: &SimConfig, dataset: &Dataset) -> Result<Vec<AgentState>, EngineError> {
    validate(cfg, dataset)?;
    let profiles = cfg.topology.profiles();
    let mut plan = data::partition_iid(dataset, &profiles, seeds::partition_seed(cfg.master_seed))?;
    Ok(profiles
        .into_iter()
        .map(|profile| AgentState {
            weights: learner::init_weights(
                &cfg.learner,
                seeds::init_seed(cfg.master_seed, profile.id.0),
            ),
            shard: plan
                .shards
                .remove(&profile.id)
                .unwrap_or_else(|| DataShard::empty(dataset.input_dim)),
            profile,
        })
        .collect())
}

fn validate(cfg: &SimConfig, dataset: &Dataset) -> Result<(), EngineError> {
    cfg.learner.validate().map_err(EngineError::InvalidConfig)?;
    if cfg.communication_rounds == 0 {
        return Err(EngineError::InvalidConfig(
            "communication_rounds must be positive".into(),
        ));
    }
    if cfg.local_epochs == 0 {
        return Err(EngineError::InvalidConfig(
            "local_epochs must be positive".into(),
        ));
    }
    if cfg.learner.input_dim != dataset.input_dim {
        return Err(EngineError::InvalidConfig(format!(
            "learner input_dim {} does not match dataset input_dim {}",
            cfg.learner.input_dim, dataset.input_dim
        )));
    }
    if cfg.learner.num_classes != dataset.num_classes {
        return Err(EngineError::InvalidConfig(format!(
            "learner num_classes {} does not match dataset num_classes {}",
            cfg.learner.num_classes, dataset.num_classes
        )));
    }
    Ok(())
}

/// One iteration: train the head (if it holds data), then replace its
/// weights by the weighted aggregate of its own trained weights and its
/// neighbors' current weights. Only the head's state changes; neighbors are
/// read, never written. Returns the head id.
pub fn step(
    states: &mut [AgentState],
    iteration: u64,
    cfg: &SimConfig,
) -> Result<AgentId, EngineError> {
    let head = select_head(cfg.head_policy, iteration, states.len(), cfg.master_seed);
    let h = head.0;
    if !states[h].shard.is_empty() {
        let seed = seeds::train_seed(cfg.master_seed, h, iteration);
        let (trained, _) = learner::train_epochs(
            &states[h].weights,
            &states[h].shard,
            cfg.local_epochs,
            &cfg.learner,
            seed,
        )?;
        states[h].weights = trained;
    }
    let neighbors = cfg.topology.neighbors(head);
    let mut entries: Vec<(&WeightVector, u64)> = Vec::with_capacity(neighbors.len() + 1);
    entries.push((&states[h].weights, states[h].example_count()));
    for n in &neighbors {
        entries.push((&states[n.0].weights, states[n.0].example_count()));
    }
    let outcome = aggregate(&entries)?;
    if let Aggregated::Combined(w) = outcome {
        states[h].weights = w;
    }
    Ok(head)
}

/// Evaluate every agent on `testset`, in agent order. Runs on the rayon
/// pool when the `parallel` feature is on; output is identical either way.
pub fn evaluate_all(
    states: &[AgentState],
    testset: &DataShard,
    spec: &LearnerSpec,
) -> Result<Vec<EvalResult>, EngineError> {
    parallel::map_indexed(states.len(), |i| {
        learner::evaluate(&states[i].weights, testset, spec)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()
    .map_err(EngineError::from)
}

/// Sequential twin of [`evaluate_all`] for the bench suite.
pub fn evaluate_all_seq(
    states: &[AgentState],
    testset: &DataShard,
    spec: &LearnerSpec,
) -> Result<Vec<EvalResult>, EngineError> {
    parallel::map_indexed_seq(states.len(), |i| {
        learner::evaluate(&states[i].weights, testset, spec)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()
    .map_err(EngineError::from)
}

/// Run the full simulation: `total_agents x communication_rounds`
/// iterations, with an evaluation sweep over all agents after every round.
/// Fully deterministic in the master seed.
pub fn run(cfg: &SimConfig, dataset: &Dataset) -> Result<SimResult, EngineError> {
    let mut states = init_states(cfg, dataset)?;
    let total_agents = states.len() as u64;
    let rounds = cfg.communication_rounds;
    let mut metrics = Vec::with_capacity(states.len() * rounds as usize);
    let mut last_evals = Vec::new();
    for round in 1..=rounds {
        let base = (round as u64 - 1) * total_agents;
        for i in 0..total_agents {
            step(&mut states, base + i, cfg)?;
        }
        last_evals = evaluate_all(&states, &dataset.test, &cfg.learner)?;
        for (state, eval) in states.iter().zip(&last_evals) {
            metrics.push(MetricsRecord {
                round,
                agent: state.profile.id,
                role: state.profile.role,
                loss: eval.loss,
                accuracy: eval.accuracy,
            });
        }
    }
    Ok(SimResult {
        metrics,
        final_evals: states
            .iter()
            .zip(&last_evals)
            .map(|(s, e)| (s.profile.id, s.profile.role, *e))
            .collect(),
        final_weights: states.into_iter().map(|s| s.weights).collect(),
        config_snapshot: cfg.describe(),
    })
}
