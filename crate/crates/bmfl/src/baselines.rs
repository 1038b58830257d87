//! The four comparison schemes next to the federated learner: brute-force
//! search (BFS), evenly deployed beams (EDB), distributed learning without
//! aggregation (BMDL), and centralized learning at the MBS (BMCL).
//!
//! All schemes share the association and throughput code paths; only the
//! beam decision differs. BFS enumerates the joint sector assignment space
//! and is the optimality oracle for small instances.

use std::str::FromStr;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use thiserror::Error;

use crate::deepq::{self, DeepQError, Hyperparams, MlpSpec, ModelWeights, ReplayPool};
use crate::federation::{FederationError, TraceRow, TrainedModels, TrainingTrace, run_federated};
use crate::mdp::{self, AgentAction, AgentState, MdpError, evaluate_policy, observe};
use crate::network::{BeamPolicy, NetworkState, RngStream, Scenario, SectorSet};
use rand::Rng;

/// The five selectable beam-management schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeId {
    Bmfl,
    Bfs,
    Edb,
    Bmdl,
    Bmcl,
}

impl SchemeId {
    pub const ALL: [SchemeId; 5] = [
        SchemeId::Bmfl,
        SchemeId::Bfs,
        SchemeId::Edb,
        SchemeId::Bmdl,
        SchemeId::Bmcl,
    ];

    pub fn trains(self) -> bool {
        matches!(self, SchemeId::Bmfl | SchemeId::Bmdl | SchemeId::Bmcl)
    }
}

impl std::fmt::Display for SchemeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SchemeId::Bmfl => "BMFL",
            SchemeId::Bfs => "BFS",
            SchemeId::Edb => "EDB",
            SchemeId::Bmdl => "BMDL",
            SchemeId::Bmcl => "BMCL",
        };
        f.write_str(s)
    }
}

impl FromStr for SchemeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "BMFL" => Ok(SchemeId::Bmfl),
            "BFS" => Ok(SchemeId::Bfs),
            "EDB" => Ok(SchemeId::Edb),
            "BMDL" => Ok(SchemeId::Bmdl),
            "BMCL" => Ok(SchemeId::Bmcl),
            other => Err(format!("unknown scheme '{other}' (expected BMFL|BFS|EDB|BMDL|BMCL)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("enumeration needs {required} evaluations, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u64 },
    #[error("centralized fallback needs uniform sector/beam counts across mSBSs")]
    NonUniformAgents,
    #[error(transparent)]
    Federation(#[from] FederationError),
    #[error(transparent)]
    DeepQ(#[from] DeepQError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Number of joint sector assignments: the product over mSBSs of
/// C(S_b, M_b).
pub fn joint_action_count(scenario: &Scenario) -> u128 {
    scenario
        .msbs
        .iter()
        .map(|m| binomial(m.sectors, m.max_beams))
        .product()
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut out: u128 = 1;
    for i in 0..k {
        out = out * (n - i) as u128 / (i + 1) as u128;
    }
    out
}

fn decode_joint(index: usize, action_sets: &[Vec<AgentAction>]) -> BeamPolicy {
    let mut policy = BeamPolicy::empty(action_sets.len());
    let mut rem = index;
    for b in (0..action_sets.len()).rev() {
        let n = action_sets[b].len();
        policy.set_sectors(b, action_sets[b][rem % n].sectors);
        rem /= n;
    }
    policy
}

/// Exhaustive search over every joint sector assignment, returning the
/// throughput-maximizing policy (ties to the lexicographically smallest).
/// Errors with the required evaluation count when it exceeds `budget`.
pub fn bfs_policy(
    state: &NetworkState,
    scenario: &Scenario,
    budget: u64,
) -> Result<BeamPolicy, BaselineError> {
    #[cfg(feature = "parallel")]
    {
        bfs_policy_par(state, scenario, budget)
    }
    #[cfg(not(feature = "parallel"))]
    {
        bfs_policy_seq(state, scenario, budget)
    }
}

fn bfs_prepare(
    scenario: &Scenario,
    budget: u64,
) -> Result<(Vec<Vec<AgentAction>>, usize), BaselineError> {
    let action_sets: Vec<Vec<AgentAction>> =
        scenario.msbs.iter().map(mdp::enumerate_actions).collect();
    let required: u128 = action_sets.iter().map(|a| a.len() as u128).product();
    if required > budget as u128 {
        return Err(BaselineError::BudgetExceeded { required, budget });
    }
    Ok((action_sets, required as usize))
}

// Higher reward wins; equal rewards keep the smaller enumeration index, so
// the reduction is order-independent.
fn better(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

/// Sequential BFS enumeration (always available; the default entry point
/// dispatches to the rayon version when the `parallel` feature is on).
pub fn bfs_policy_seq(
    state: &NetworkState,
    scenario: &Scenario,
    budget: u64,
) -> Result<BeamPolicy, BaselineError> {
    let (action_sets, total) = bfs_prepare(scenario, budget)?;
    let best = (0..total)
        .map(|i| (evaluate_policy(state, &decode_joint(i, &action_sets), scenario), i))
        .fold((f64::NEG_INFINITY, usize::MAX), better);
    Ok(decode_joint(best.1, &action_sets))
}

/// Rayon BFS enumeration over the joint assignment space.
#[cfg(feature = "parallel")]
pub fn bfs_policy_par(
    state: &NetworkState,
    scenario: &Scenario,
    budget: u64,
) -> Result<BeamPolicy, BaselineError> {
    let (action_sets, total) = bfs_prepare(scenario, budget)?;
    let best = (0..total)
        .into_par_iter()
        .map(|i| (evaluate_policy(state, &decode_joint(i, &action_sets), scenario), i))
        .reduce(|| (f64::NEG_INFINITY, usize::MAX), better);
    Ok(decode_joint(best.1, &action_sets))
}

fn comb_sectors(offset: usize, spacing: usize, max_beams: usize, sectors: usize) -> SectorSet {
    let indices: Vec<usize> = (0..max_beams).map(|k| (offset + k * spacing) % sectors).collect();
    SectorSet::from_indices(&indices)
}

/// Evenly deployed beams: per mSBS the beams sit a fixed stride
/// floor(S_b / M_b) apart, and only the single offset of the first beam is
/// optimized (greedily, in mSBS order, against the current positions).
pub fn edb_policy(state: &NetworkState, scenario: &Scenario) -> BeamPolicy {
    let mut policy = BeamPolicy::empty(scenario.num_msbs());
    for m in &scenario.msbs {
        let spacing = (m.sectors / m.max_beams).max(1);
        policy.set_sectors(m.id, comb_sectors(0, spacing, m.max_beams, m.sectors));
    }
    for m in &scenario.msbs {
        let spacing = (m.sectors / m.max_beams).max(1);
        let mut best = (f64::NEG_INFINITY, 0);
        for offset in 0..spacing {
            policy.set_sectors(m.id, comb_sectors(offset, spacing, m.max_beams, m.sectors));
            let reward = evaluate_policy(state, &policy, scenario);
            if reward > best.0 {
                best = (reward, offset);
            }
        }
        policy.set_sectors(m.id, comb_sectors(best.1, spacing, m.max_beams, m.sectors));
    }
    policy
}

/// Distributed learning: the federated round loop with aggregation replaced
/// by the identity, so every mSBS keeps its own model across rounds.
pub fn bmdl_trainer(
    scenario: &Scenario,
    hp: &Hyperparams,
    rounds: u64,
    tau: usize,
) -> Result<TrainingTrace, FederationError> {
    run_federated(scenario, hp, rounds, tau, false)
}

/// One stored transition of the centralized learner in joint mode.
#[derive(Debug, Clone)]
struct JointExperience {
    states: Vec<AgentState>,
    action_index: usize,
    reward: f64,
    next_states: Vec<AgentState>,
}

fn joint_encode(
    states: &[AgentState],
    joint_index: usize,
    action_sets: &[Vec<AgentAction>],
    scenario: &Scenario,
) -> Result<Vec<f64>, MdpError> {
    let mut rem = joint_index;
    let mut picks = vec![0usize; action_sets.len()];
    for b in (0..action_sets.len()).rev() {
        picks[b] = rem % action_sets[b].len();
        rem /= action_sets[b].len();
    }
    let mut x = Vec::new();
    for (b, s) in states.iter().enumerate() {
        x.extend(mdp::encode(
            s,
            &action_sets[b][picks[b]],
            &scenario.msbs[b],
            scenario.num_users,
        )?);
    }
    Ok(x)
}

fn joint_argmax(
    model: &ModelWeights,
    states: &[AgentState],
    total: usize,
    action_sets: &[Vec<AgentAction>],
    scenario: &Scenario,
) -> Result<usize, BaselineError> {
    let mut best = (f64::NEG_INFINITY, 0usize);
    for i in 0..total {
        let x = joint_encode(states, i, action_sets, scenario)?;
        let q = deepq::forward(model, &x)?;
        if q > best.0 {
            best = (q, i);
        }
    }
    Ok(best.1)
}

/// Centralized learning at the MBS. Within `joint_budget` the single DDQN
/// scores the full joint action space on a concatenated state encoding;
/// above it each mSBS greedily argmaxes its own encoding through the shared
/// network (the decomposed fallback, reported in the trace models).
pub fn bmcl_trainer(
    scenario: &Scenario,
    hp: &Hyperparams,
    rounds: u64,
    tau: usize,
    joint_budget: u64,
) -> Result<TrainingTrace, BaselineError> {
    assert!(rounds >= 1 && tau >= 1);
    if joint_action_count(scenario) <= joint_budget as u128 {
        bmcl_joint(scenario, hp, rounds, tau)
    } else {
        bmcl_decomposed(scenario, hp, rounds, tau)
    }
}

fn bmcl_joint(
    scenario: &Scenario,
    hp: &Hyperparams,
    rounds: u64,
    tau: usize,
) -> Result<TrainingTrace, BaselineError> {
    let num_msbs = scenario.num_msbs();
    let action_sets: Vec<Vec<AgentAction>> =
        scenario.msbs.iter().map(mdp::enumerate_actions).collect();
    let total: usize = action_sets.iter().map(|a| a.len()).product();
    let in_dim: usize = (0..num_msbs).map(|b| mdp::input_dim(scenario, b)).sum();

    let mut weights_rng = scenario.rng(RngStream::Weights);
    let mut online = ModelWeights::init_uniform(MlpSpec::standard(in_dim), &mut weights_rng);
    let mut target = online.clone();
    let mut pool: ReplayPool<JointExperience> = ReplayPool::new(hp.replay_capacity);
    let mut rng = scenario.rng(RngStream::CentralLearner);

    let reward_scale = hp.effective_reward_scale(scenario);
    let mut state = NetworkState::init(scenario);
    let mut mobility_rng = scenario.rng(RngStream::MobilityTrain);
    let mut rows = Vec::new();
    let mut final_policy = BeamPolicy::empty(num_msbs);
    let mut global_slot = 0u64;
    let mut train_steps = 0u64;

    for round in 1..=rounds {
        for _ in 0..tau {
            let epsilon = hp.epsilon(global_slot);
            global_slot += 1;
            let states: Vec<AgentState> =
                (0..num_msbs).map(|b| observe(b, &state, scenario)).collect();
            let chosen = if rng.random::<f64>() < epsilon {
                rng.random_range(0..total)
            } else {
                joint_argmax(&online, &states, total, &action_sets, scenario)?
            };
            let policy = decode_joint(chosen, &action_sets);
            let outcome = mdp::step(&mut state, &policy, scenario, &mut mobility_rng)?;
            let reward = outcome.reward_bps / reward_scale;
            let next_states: Vec<AgentState> =
                (0..num_msbs).map(|b| observe(b, &state, scenario)).collect();
            pool.push(JointExperience {
                states,
                action_index: chosen,
                reward,
                next_states,
            });

            // one minibatch step of the joint learner
            let k = hp.minibatch.min(pool.len());
            let mut loss = 0.0;
            let mut direction = vec![0.0; online.params.len()];
            for _ in 0..k {
                let e = pool.get(rng.random_range(0..pool.len()));
                let best_next =
                    joint_argmax(&online, &e.next_states, total, &action_sets, scenario)?;
                let x_next = joint_encode(&e.next_states, best_next, &action_sets, scenario)?;
                let y = e.reward + hp.gamma * deepq::forward(&target, &x_next)?;
                let x = joint_encode(&e.states, e.action_index, &action_sets, scenario)?;
                let q = deepq::forward(&online, &x)?;
                let residual = y - q;
                loss += residual * residual;
                for (d, g) in direction.iter_mut().zip(deepq::backward(&online, &x, residual)?) {
                    *d += g;
                }
            }
            let kf = k as f64;
            for (p, d) in online.params.iter_mut().zip(&direction) {
                *p += hp.alpha * d / kf;
            }
            train_steps += 1;
            deepq::sync_target(&online, &mut target, train_steps, hp.target_interval);
            rows.push(TraceRow {
                round,
                slot: global_slot,
                msbs: 0,
                loss: loss / kf,
                reward,
                coverage: outcome.coverage,
                throughput_bps: outcome.reward_bps,
            });
            final_policy = policy;
        }
    }
    Ok(TrainingTrace {
        rows,
        final_policy,
        models: TrainedModels::Shared { model: online, joint: true },
    })
}

fn bmcl_decomposed(
    scenario: &Scenario,
    hp: &Hyperparams,
    rounds: u64,
    tau: usize,
) -> Result<TrainingTrace, BaselineError> {
    let num_msbs = scenario.num_msbs();
    let first = &scenario.msbs[0];
    if scenario
        .msbs
        .iter()
        .any(|m| m.sectors != first.sectors || m.max_beams != first.max_beams)
    {
        return Err(BaselineError::NonUniformAgents);
    }
    let actions = mdp::enumerate_actions(first);
    let in_dim = mdp::input_dim(scenario, 0);

    let mut weights_rng = scenario.rng(RngStream::Weights);
    let mut online = ModelWeights::init_uniform(MlpSpec::standard(in_dim), &mut weights_rng);
    let mut target = online.clone();
    let mut pool = ReplayPool::new(hp.replay_capacity);
    let mut rng = scenario.rng(RngStream::CentralLearner);

    let reward_scale = hp.effective_reward_scale(scenario);
    let mut state = NetworkState::init(scenario);
    let mut mobility_rng = scenario.rng(RngStream::MobilityTrain);
    let mut rows = Vec::new();
    let mut final_policy = BeamPolicy::empty(num_msbs);
    let mut global_slot = 0u64;
    let mut train_steps = 0u64;

    for round in 1..=rounds {
        for _ in 0..tau {
            let epsilon = hp.epsilon(global_slot);
            global_slot += 1;
            let states: Vec<AgentState> =
                (0..num_msbs).map(|b| observe(b, &state, scenario)).collect();
            let mut policy = BeamPolicy::empty(num_msbs);
            let mut picks = Vec::with_capacity(num_msbs);
            for (b, s) in states.iter().enumerate() {
                let action = deepq::select_action(
                    s,
                    &online,
                    &actions,
                    epsilon,
                    &scenario.msbs[b],
                    scenario.num_users,
                    &mut rng,
                )?;
                policy.set_sectors(b, action.sectors);
                picks.push(action);
            }
            let outcome = mdp::step(&mut state, &policy, scenario, &mut mobility_rng)?;
            let reward = outcome.reward_bps / reward_scale;
            let next_states: Vec<AgentState> =
                (0..num_msbs).map(|b| observe(b, &state, scenario)).collect();
            for b in 0..num_msbs {
                pool.push(deepq::Experience {
                    state: states[b].clone(),
                    action: picks[b],
                    reward,
                    next_state: next_states[b].clone(),
                    terminal: false,
                });
            }
            let out = deepq::train_step(
                &mut online,
                &target,
                &pool,
                &actions,
                first,
                scenario.num_users,
                hp,
                &mut rng,
            )?;
            train_steps += 1;
            deepq::sync_target(&online, &mut target, train_steps, hp.target_interval);
            rows.push(TraceRow {
                round,
                slot: global_slot,
                msbs: 0,
                loss: out.loss,
                reward,
                coverage: outcome.coverage,
                throughput_bps: outcome.reward_bps,
            });
            final_policy = policy;
        }
    }
    Ok(TrainingTrace {
        rows,
        final_policy,
        models: TrainedModels::Shared { model: online, joint: false },
    })
}

/// Greedy policy of a trained centralized model (joint argmax or the
/// decomposed per-agent argmax, matching how it was trained).
pub fn bmcl_greedy_policy(
    model: &ModelWeights,
    joint: bool,
    state: &NetworkState,
    scenario: &Scenario,
) -> Result<BeamPolicy, BaselineError> {
    let states: Vec<AgentState> = (0..scenario.num_msbs())
        .map(|b| observe(b, state, scenario))
        .collect();
    if joint {
        let action_sets: Vec<Vec<AgentAction>> =
            scenario.msbs.iter().map(mdp::enumerate_actions).collect();
        let total: usize = action_sets.iter().map(|a| a.len()).product();
        let best = joint_argmax(model, &states, total, &action_sets, scenario)?;
        Ok(decode_joint(best, &action_sets))
    } else {
        let mut policy = BeamPolicy::empty(scenario.num_msbs());
        for (b, s) in states.iter().enumerate() {
            let actions = mdp::enumerate_actions(&scenario.msbs[b]);
            let q = deepq::q_values(model, s, &actions, &scenario.msbs[b], scenario.num_users)?;
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
}
