//! Federated training orchestration: per-round data cleaning, local model
//! updates from the broadcast global model, tau slots of local DDQN
//! training per mSBS, and data-volume-weighted aggregation at the MBS.
//!
//! A communication round is: clean participants -> update local models from
//! the last global -> run tau environment slots (select actions, store
//! transitions, one train step per agent per slot, periodic target sync) ->
//! aggregate the local models into the next global and broadcast it.

use std::fmt::Write as _;

use thiserror::Error;

use crate::deepq::{
    self, DataWeighting, DeepQError, Experience, Hyperparams, MlpSpec, ModelWeights, ReplayPool,
};
use crate::mdp::{self, AgentAction, MdpError, observe};
use crate::network::{
    BeamPolicy, MsbsDesc, MsbsId, NetworkState, Point, RngStream, Scenario, UserId,
};

/// Per-mSBS record of how often each user has joined local training.
#[derive(Debug, Clone)]
pub struct ParticipationLedger {
    participations: Vec<u64>,
    total: u64,
}

impl ParticipationLedger {
    pub fn new(num_users: usize) -> Self {
        ParticipationLedger {
            participations: vec![0; num_users],
            total: 0,
        }
    }

    /// n_u / N_total, with an empty history counting as zero.
    pub fn frequency(&self, u: UserId) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.participations[u] as f64 / self.total as f64
        }
    }

    pub fn total_trainings(&self) -> u64 {
        self.total
    }

    pub fn participations(&self, u: UserId) -> u64 {
        self.participations[u]
    }

    fn record(&mut self, selected: &[UserId]) {
        for &u in selected {
            self.participations[u] += 1;
        }
        self.total += 1;
    }
}

#[derive(Debug, Error)]
pub enum FederationError {
    #[error("no local models to aggregate")]
    EmptyInput,
    #[error("total training data volume is zero")]
    ZeroData,
    #[error("local models have mismatched shapes")]
    ShapeMismatch,
    #[error(transparent)]
    DeepQ(#[from] DeepQError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Participant filter: keep users inside the coverage radius whose
/// participation frequency has not exceeded eta, then charge the ledger for
/// this training round.
pub fn clean_data(
    msbs: &MsbsDesc,
    user_positions: &[Point],
    ledger: &mut ParticipationLedger,
    eta: f64,
) -> Vec<UserId> {
    debug_assert!(eta > 0.0 && eta <= 1.0);
    let selected: Vec<UserId> = user_positions
        .iter()
        .enumerate()
        .filter(|(u, pos)| {
            pos.distance_to(msbs.position) <= msbs.coverage_radius && ledger.frequency(*u) <= eta
        })
        .map(|(u, _)| u)
        .collect();
    ledger.record(&selected);
    selected
}

/// Start-of-round local model: the broadcast global minus lambda/K_b times
/// the mSBS's most recent loss gradient. With no gradient history (round
/// one, cold start) this is a plain copy of the global model.
pub fn local_update(
    global_prev: &ModelWeights,
    last_loss_grad: Option<&[f64]>,
    lambda: f64,
    k_b: f64,
) -> Result<ModelWeights, FederationError> {
    let mut model = global_prev.clone();
    if let Some(grad) = last_loss_grad {
        if grad.len() != model.params.len() {
            return Err(FederationError::ShapeMismatch);
        }
        debug_assert!(k_b > 0.0);
        let scale = lambda / k_b;
        for (p, g) in model.params.iter_mut().zip(grad) {
            *p -= scale * g;
        }
    }
    Ok(model)
}

/// Data-volume-weighted parameter mean: g = sum_b K_b theta_b / K.
pub fn aggregate(locals: &[(ModelWeights, u64)]) -> Result<ModelWeights, FederationError> {
    let (first, _) = locals.first().ok_or(FederationError::EmptyInput)?;
    let total: u64 = locals.iter().map(|(_, k)| k).sum();
    if total == 0 {
        return Err(FederationError::ZeroData);
    }
    let mut params = vec![0.0; first.params.len()];
    for (model, k) in locals {
        if model.spec != first.spec {
            return Err(FederationError::ShapeMismatch);
        }
        let w = *k as f64;
        for (acc, p) in params.iter_mut().zip(&model.params) {
            *acc += w * p;
        }
    }
    let total = total as f64;
    for p in &mut params {
        *p /= total;
    }
    Ok(ModelWeights {
        spec: first.spec.clone(),
        params,
    })
}

/// One trace record: the agent's training loss for a slot together with the
/// shared slot metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub round: u64,
    /// Global slot index, 1-based across the whole run.
    pub slot: u64,
    pub msbs: MsbsId,
    pub loss: f64,
    /// Normalized reward seen by the learner.
    pub reward: f64,
    pub coverage: f64,
    pub throughput_bps: f64,
}

/// The models a finished training run leaves behind.
#[derive(Debug, Clone)]
pub enum TrainedModels {
    /// One model per mSBS (federated runs hold the final broadcast global in
    /// every slot).
    PerAgent(Vec<ModelWeights>),
    /// A single shared model (centralized training). `joint` records whether
    /// it scores joint actions or per-agent encodings.
    Shared { model: ModelWeights, joint: bool },
}

/// Full record of one training run.
#[derive(Debug, Clone)]
pub struct TrainingTrace {
    pub rows: Vec<TraceRow>,
    pub final_policy: BeamPolicy,
    pub models: TrainedModels,
}

impl TrainingTrace {
    /// CSV with the fixed column set
    /// `round,slot,msbsId,loss,reward,coverage,throughputBps`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,slot,msbsId,loss,reward,coverage,throughputBps\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{:.9e},{:.9e},{:.6},{:.3}",
                r.round, r.slot, r.msbs, r.loss, r.reward, r.coverage, r.throughput_bps
            )
            .expect("string write");
        }
        out
    }

    /// Mean training loss over the final round, if any rows exist.
    pub fn mean_final_round_loss(&self) -> Option<f64> {
        let last = self.rows.iter().map(|r| r.round).max()?;
        let losses: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.round == last)
            .map(|r| r.loss)
            .collect();
        Some(losses.iter().sum::<f64>() / losses.len() as f64)
    }
}

/// Greedy joint policy under per-agent models: every agent argmaxes its own
/// Q over its action set (ties to the lowest action index).
pub fn greedy_agent_policy(
    models: &[ModelWeights],
    state: &NetworkState,
    scenario: &Scenario,
) -> Result<BeamPolicy, DeepQError> {
    let mut policy = BeamPolicy::empty(scenario.num_msbs());
    for (b, model) in models.iter().enumerate() {
        let obs = observe(b, state, scenario);
        let actions = mdp::enumerate_actions(&scenario.msbs[b]);
        let q = deepq::q_values(model, &obs, &actions, &scenario.msbs[b], scenario.num_users)?;
        let mut best = 0;
        for (i, &v) in q.iter().enumerate().skip(1) {
            if v > q[best] {
                best = i;
            }
        }
        policy.set_sectors(b, actions[best].sectors);
    }
    Ok(policy)
}

/// Predicted work for a run: J * (B * U + tau) per-round cleaning plus slot
/// operations. The harness reports it next to the measured slot count.
pub fn complexity_estimate(scenario: &Scenario, rounds: u64, tau: u64) -> u64 {
    rounds * (scenario.num_msbs() as u64 * scenario.num_users as u64 + tau)
}

/// Federated training (the flagship scheme): DDQN agents on every mSBS,
/// data cleaning each round, weighted aggregation and broadcast.
pub fn run_bmfl(
    scenario: &Scenario,
    hp: &Hyperparams,
    rounds: u64,
    tau: usize,
) -> Result<TrainingTrace, FederationError> {
    run_federated(scenario, hp, rounds, tau, true)
}

/// Shared round loop for the federated scheme and its no-aggregation
/// (distributed) ablation. With aggregation disabled each mSBS's own model
/// doubles as its "global", so a single-mSBS run is bitwise identical either
/// way.
pub(crate) fn run_federated(
    scenario: &Scenario,
    hp: &Hyperparams,
    rounds: u64,
    tau: usize,
    aggregate_rounds: bool,
) -> Result<TrainingTrace, FederationError> {
    assert!(rounds >= 1 && tau >= 1);
    let num_msbs = scenario.num_msbs();
    let num_users = scenario.num_users;
    let action_sets: Vec<Vec<AgentAction>> =
        scenario.msbs.iter().map(mdp::enumerate_actions).collect();

    let mut weights_rng = scenario.rng(RngStream::Weights);
    let spec = MlpSpec::standard(mdp::input_dim(scenario, 0));
    let mut global = ModelWeights::init_uniform(spec, &mut weights_rng);
    let mut online: Vec<ModelWeights> = vec![global.clone(); num_msbs];
    let mut targets: Vec<ModelWeights> = online.clone();
    let mut pools: Vec<ReplayPool> = (0..num_msbs)
        .map(|_| ReplayPool::new(hp.replay_capacity))
        .collect();
    let mut ledgers: Vec<ParticipationLedger> = (0..num_msbs)
        .map(|_| ParticipationLedger::new(num_users))
        .collect();
    let mut agent_rngs: Vec<_> = (0..num_msbs)
        .map(|b| scenario.rng(RngStream::Learner(b)))
        .collect();
    let mut last_loss_grads: Vec<Option<Vec<f64>>> = vec![None; num_msbs];
    let mut train_steps = vec![0u64; num_msbs];

    let reward_scale = hp.effective_reward_scale(scenario);
    let mut state = NetworkState::init(scenario);
    let mut mobility_rng = scenario.rng(RngStream::MobilityTrain);

    let mut rows = Vec::with_capacity(rounds as usize * tau * num_msbs);
    let mut final_policy = BeamPolicy::empty(num_msbs);
    let mut global_slot = 0u64;

    for round in 1..=rounds {
        // data cleaning and the round's data volumes K_b
        let mut volumes = Vec::with_capacity(num_msbs);
        for b in 0..num_msbs {
            let participants =
                clean_data(&scenario.msbs[b], &state.user_positions, &mut ledgers[b], hp.eta);
            let k_b = match hp.data_weighting {
                DataWeighting::Participants => tau as u64 * participants.len().max(1) as u64,
                DataWeighting::SlotsOnly => tau as u64,
            };
            volumes.push(k_b);
        }

        // local model update from the broadcast global (or own model when
        // aggregation is disabled), then reset the target network
        for b in 0..num_msbs {
            let basis = if aggregate_rounds { &global } else { &online[b] };
            let grad = if round == 1 { None } else { last_loss_grads[b].as_deref() };
            online[b] = local_update(basis, grad, hp.lambda, volumes[b] as f64)?;
            targets[b] = online[b].clone();
        }

        for _ in 0..tau {
            let epsilon = hp.epsilon(global_slot);
            global_slot += 1;

            let observations: Vec<_> = (0..num_msbs).map(|b| observe(b, &state, scenario)).collect();
            let mut policy = BeamPolicy::empty(num_msbs);
            let mut chosen = Vec::with_capacity(num_msbs);
            for b in 0..num_msbs {
                let action = deepq::select_action(
                    &observations[b],
                    &online[b],
                    &action_sets[b],
                    epsilon,
                    &scenario.msbs[b],
                    num_users,
                    &mut agent_rngs[b],
                )?;
                policy.set_sectors(b, action.sectors);
                chosen.push(action);
            }

            let outcome = mdp::step(&mut state, &policy, scenario, &mut mobility_rng)?;
            let reward = outcome.reward_bps / reward_scale;

            let next_observations: Vec<_> =
                (0..num_msbs).map(|b| observe(b, &state, scenario)).collect();
            for b in 0..num_msbs {
                pools[b].push(Experience {
                    state: observations[b].clone(),
                    action: chosen[b],
                    reward,
                    next_state: next_observations[b].clone(),
                    terminal: false,
                });
            }

            for b in 0..num_msbs {
                let out = deepq::train_step(
                    &mut online[b],
                    &targets[b],
                    &pools[b],
                    &action_sets[b],
                    &scenario.msbs[b],
                    num_users,
                    hp,
                    &mut agent_rngs[b],
                )?;
                train_steps[b] += 1;
                deepq::sync_target(&online[b], &mut targets[b], train_steps[b], hp.target_interval);
                last_loss_grads[b] = Some(out.loss_grad);
                rows.push(TraceRow {
                    round,
                    slot: global_slot,
                    msbs: b,
                    loss: out.loss,
                    reward,
                    coverage: outcome.coverage,
                    throughput_bps: outcome.reward_bps,
                });
            }
            final_policy = policy;
        }

        if aggregate_rounds {
            let locals: Vec<(ModelWeights, u64)> = online
                .iter()
                .cloned()
                .zip(volumes.iter().copied())
                .collect();
            global = aggregate(&locals)?;
        }
    }

    // Federated runs end with the last global broadcast to every mSBS.
    let models = if aggregate_rounds {
        TrainedModels::PerAgent(vec![global; num_msbs])
    } else {
        TrainedModels::PerAgent(online)
    };
    Ok(TrainingTrace {
        rows,
        final_policy,
        models,
    })
}
