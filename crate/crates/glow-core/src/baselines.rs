//! Centralized (cnl) and federated-averaging (fl) reference systems.
//!
//! Both share the learner, partitioning, and aggregation code paths of the
//! gossip engine, so the three systems are directly comparable: same models,
//! same seeds discipline, same metrics format.

use crate::data::{self, Dataset};
use crate::engine::{aggregate, Aggregated, EngineError, SimResult};
use crate::learner::{self, LearnerSpec, WeightVector};
use crate::parallel;
use crate::reporting::MetricsRecord;
use crate::seeds;
use crate::topology::{AgentId, AgentProfile, Role};

/// Configuration of a federated run: all agents are connected to the server,
/// but agents listed in `empty` hold no local data.
#[derive(Debug, Clone)]
pub struct FlConfig {
    pub num_agents: usize,
    pub communication_rounds: u32,
    pub local_epochs: u32,
    pub learner: LearnerSpec,
    pub master_seed: u64,
    pub empty: Vec<AgentId>,
}

/// Train one model on the whole train set, evaluating after every epoch.
/// Metrics are recorded under agent 0 with role R; `round` is the epoch.
pub fn run_cnl(
    spec: &LearnerSpec,
    dataset: &Dataset,
    total_epochs: u32,
    seed: u64,
) -> Result<SimResult, EngineError> {
    if total_epochs == 0 {
        return Err(EngineError::InvalidConfig(
            "total_epochs must be positive".into(),
        ));
    }
    check_learner(spec, dataset)?;
    let mut weights = learner::init_weights(spec, seeds::global_init_seed(seed));
    let mut metrics = Vec::with_capacity(total_epochs as usize);
    let mut last_eval = None;
    for epoch in 1..=total_epochs {
        let (next, _) = learner::train_epochs(
            &weights,
            &dataset.train,
            1,
            spec,
            seeds::epoch_seed(seed, epoch as u64),
        )?;
        weights = next;
        let eval = learner::evaluate(&weights, &dataset.test, spec)?;
        metrics.push(MetricsRecord {
            round: epoch,
            agent: AgentId(0),
            role: Role::Regular,
            loss: eval.loss,
            accuracy: eval.accuracy,
        });
        last_eval = Some(eval);
    }
    let eval = last_eval.expect("at least one epoch ran");
    Ok(SimResult {
        metrics,
        final_evals: vec![(AgentId(0), Role::Regular, eval)],
        final_weights: vec![weights],
        config_snapshot: format!(
            "system=cnl total_epochs={total_epochs} learner={} seed={seed}",
            spec.family
        ),
    })
}

/// Vanilla federated averaging: each round the global weights are broadcast,
/// every data-holding agent trains locally, and the server replaces the
/// global model by the example-count-weighted mean of all client models.
/// Empty agents contribute weight 0 and simply receive the broadcast. The
/// single global model is evaluated once per round, recorded under agent 0.
pub fn run_fedavg(cfg: &FlConfig, dataset: &Dataset) -> Result<SimResult, EngineError> {
    if cfg.num_agents == 0 {
        return Err(EngineError::InvalidConfig(
            "num_agents must be positive".into(),
        ));
    }
    if cfg.communication_rounds == 0 || cfg.local_epochs == 0 {
        return Err(EngineError::InvalidConfig(
            "communication_rounds and local_epochs must be positive".into(),
        ));
    }
    check_learner(&cfg.learner, dataset)?;
    for id in &cfg.empty {
        if id.0 >= cfg.num_agents {
            return Err(EngineError::InvalidConfig(format!(
                "empty agent {id} out of range for {} agents",
                cfg.num_agents
            )));
        }
    }
    let profiles: Vec<AgentProfile> = (0..cfg.num_agents)
        .map(|i| {
            let id = AgentId(i);
            let has_data = !cfg.empty.contains(&id);
            AgentProfile {
                id,
                role: Role::of(has_data, true),
                has_data,
                is_connected: true,
            }
        })
        .collect();
    if profiles.iter().all(|p| !p.has_data) {
        return Err(EngineError::InvalidConfig(
            "every agent is empty; nothing to train".into(),
        ));
    }

    let plan = data::partition_iid(dataset, &profiles, seeds::partition_seed(cfg.master_seed))?;
    let shards: Vec<_> = profiles
        .iter()
        .map(|p| plan.shards[&p.id].clone())
        .collect();

    let mut global = learner::init_weights(&cfg.learner, seeds::global_init_seed(cfg.master_seed));
    let mut metrics = Vec::with_capacity(cfg.communication_rounds as usize);
    let mut last_eval = None;
    for round in 1..=cfg.communication_rounds {
        // Independent client updates; collected in agent order.
        let locals: Vec<(WeightVector, u64)> =
            parallel::map_indexed(cfg.num_agents, |i| -> Result<_, EngineError> {
                if shards[i].is_empty() {
                    Ok((global.clone(), 0))
                } else {
                    let seed = seeds::train_seed(cfg.master_seed, i, round as u64);
                    let (w, _) = learner::train_epochs(
                        &global,
                        &shards[i],
                        cfg.local_epochs,
                        &cfg.learner,
                        seed,
                    )?;
                    Ok((w, shards[i].len() as u64))
                }
            })
            .into_iter()
            .collect::<Result<_, _>>()?;

        let entries: Vec<(&WeightVector, u64)> = locals.iter().map(|(w, c)| (w, *c)).collect();
        if let Aggregated::Combined(w) = aggregate(&entries)? {
            global = w;
        }

        let eval = learner::evaluate(&global, &dataset.test, &cfg.learner)?;
        metrics.push(MetricsRecord {
            round,
            agent: AgentId(0),
            role: Role::Regular,
            loss: eval.loss,
            accuracy: eval.accuracy,
        });
        last_eval = Some(eval);
    }
    let eval = last_eval.expect("at least one round ran");
    Ok(SimResult {
        metrics,
        final_evals: vec![(AgentId(0), Role::Regular, eval)],
        final_weights: vec![global],
        config_snapshot: format!(
            "system=fl agents={} rounds={} local_epochs={} learner={} seed={}",
            cfg.num_agents,
            cfg.communication_rounds,
            cfg.local_epochs,
            cfg.learner.family,
            cfg.master_seed
        ),
    })
}

fn check_learner(spec: &LearnerSpec, dataset: &Dataset) -> Result<(), EngineError> {
    spec.validate().map_err(EngineError::InvalidConfig)?;
    if spec.input_dim != dataset.input_dim || spec.num_classes != dataset.num_classes {
        return Err(EngineError::InvalidConfig(format!(
            "learner geometry ({}, {}) does not match dataset ({}, {})",
            spec.input_dim, spec.num_classes, dataset.input_dim, dataset.num_classes
        )));
    }
    Ok(())
}
