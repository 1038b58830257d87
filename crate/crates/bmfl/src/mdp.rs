//! The per-mSBS decision process that drives every learner.
//!
//! Each mSBS is an agent. Its observation is the set of users it served last
//! slot, its own active sectors, and a one-scalar summary of the other
//! mSBSs' sector occupancy. An action is a fixed-size choice of M_b sectors
//! out of S_b; the Q-network scores (state, action) pairs one at a time, so
//! the action space is the full C(S_b, M_b) enumeration. All agents share
//! the slot reward R(t), the system throughput.

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::association::{associate, sweep_and_perceive};
use crate::channel::{self};
use crate::network::{
    BeamPolicy, MsbsDesc, MsbsId, NetworkState, Scenario, SectorSet, ShadowingMode, advance_users,
    system_throughput, user_coverage,
};

/// One agent's observation of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    /// Indicator per user: served by this mSBS in the previous slot.
    pub serving: Vec<bool>,
    /// The agent's own active sectors pi_b(t).
    pub own_sectors: SectorSet,
    /// Fraction of the other mSBSs' sectors currently occupied by beams.
    pub other_occupancy: f64,
}

/// A beam configuration choice for one mSBS: exactly M_b sectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentAction {
    pub sectors: SectorSet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOutcome {
    /// Shared reward R(t): system throughput in bit/s.
    pub reward_bps: f64,
    pub coverage: f64,
}

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("mSBS {msbs} chose {chosen} sectors but supports at most {max}")]
    InvalidAction { msbs: MsbsId, chosen: usize, max: usize },
    #[error("state encodes {got} users but the scenario has {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("constraint violated after slot {slot}: {what}")]
    ConstraintViolation { slot: u64, what: String },
}

/// Build agent b's observation from the current network state.
pub fn observe(b: MsbsId, state: &NetworkState, scenario: &Scenario) -> AgentState {
    let serving = (0..scenario.num_users)
        .map(|u| state.assoc.is_associated(u, b))
        .collect();
    let (occupied, capacity) = scenario
        .msbs
        .iter()
        .filter(|m| m.id != b)
        .fold((0usize, 0usize), |(o, c), m| {
            (o + state.policy.sectors(m.id).len(), c + m.sectors)
        });
    AgentState {
        serving,
        own_sectors: state.policy.sectors(b),
        other_occupancy: if capacity == 0 {
            0.0
        } else {
            occupied as f64 / capacity as f64
        },
    }
}

/// All size-M_b subsets of the S_b sectors, in lexicographic order.
pub fn enumerate_actions(msbs: &MsbsDesc) -> Vec<AgentAction> {
    let (s, m) = (msbs.sectors, msbs.max_beams);
    let mut out = Vec::new();
    let mut comb: Vec<usize> = (0..m).collect();
    loop {
        out.push(AgentAction {
            sectors: SectorSet::from_indices(&comb),
        });
        // advance to the next lexicographic combination
        let mut i = m;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if comb[i] != i + s - m {
                break;
            }
        }
        comb[i] += 1;
        for j in i + 1..m {
            comb[j] = comb[j - 1] + 1;
        }
    }
}

/// Feature vector of length U + 2*M_b + 1 for one (state, action) pair:
/// the serving-user indicators, the current sectors and the candidate
/// sectors (each normalized by S_b, padded with -1, ascending), and the
/// other-mSBS occupancy scalar.
pub fn encode(
    state: &AgentState,
    action: &AgentAction,
    msbs: &MsbsDesc,
    num_users: usize,
) -> Result<Vec<f64>, MdpError> {
    if state.serving.len() != num_users {
        return Err(MdpError::DimensionMismatch {
            got: state.serving.len(),
            expected: num_users,
        });
    }
    let mut v = Vec::with_capacity(num_users + 2 * msbs.max_beams + 1);
    v.extend(state.serving.iter().map(|&s| if s { 1.0 } else { 0.0 }));
    push_sectors(&mut v, state.own_sectors, msbs);
    push_sectors(&mut v, action.sectors, msbs);
    v.push(state.other_occupancy);
    Ok(v)
}

fn push_sectors(v: &mut Vec<f64>, sectors: SectorSet, msbs: &MsbsDesc) {
    let mut n = 0;
    for s in sectors.iter() {
        v.push(s as f64 / msbs.sectors as f64);
        n += 1;
    }
    for _ in n..msbs.max_beams {
        v.push(-1.0);
    }
}

/// Input width of the Q-network for one agent.
pub fn input_dim(scenario: &Scenario, b: MsbsId) -> usize {
    scenario.num_users + 2 * scenario.msbs[b].max_beams + 1
}

/// Apply a joint beam policy to a scratch copy of the state and return the
/// resulting throughput. Used by the enumeration baselines; does not advance
/// time or mobility.
pub fn evaluate_policy(state: &NetworkState, policy: &BeamPolicy, scenario: &Scenario) -> f64 {
    let mut scratch = state.clone();
    scratch.policy = policy.clone();
    let report = sweep_and_perceive(&scratch, scenario);
    scratch.assoc = associate(&report, scenario, &scratch);
    system_throughput(&scratch, scenario)
}

/// Advance the environment one slot: apply the joint action, re-associate,
/// measure the shared reward, then move the users. The returned reward is
/// identical for every agent.
pub fn step(
    state: &mut NetworkState,
    joint_action: &BeamPolicy,
    scenario: &Scenario,
    mobility_rng: &mut ChaCha8Rng,
) -> Result<SlotOutcome, MdpError> {
    for m in &scenario.msbs {
        let chosen = joint_action.sectors(m.id).len();
        if chosen > m.max_beams {
            return Err(MdpError::InvalidAction {
                msbs: m.id,
                chosen,
                max: m.max_beams,
            });
        }
    }
    if scenario.shadowing == ShadowingMode::PerSlot {
        state.redraw_shadowing(scenario);
    }
    state.policy = joint_action.clone();
    let report = sweep_and_perceive(state, scenario);
    state.assoc = associate(&report, scenario, state);
    let reward_bps = system_throughput(state, scenario);
    let coverage = user_coverage(state, scenario);
    validate_constraints(state, scenario)?;
    advance_users(state, scenario, mobility_rng);
    state.slot += 1;
    Ok(SlotOutcome { reward_bps, coverage })
}

/// Check the problem constraints on the current state: beam budget per mSBS,
/// SINR floor on every active link, per-user association cap, and
/// policy/association consistency. Runs after every slot.
pub fn validate_constraints(state: &NetworkState, scenario: &Scenario) -> Result<(), MdpError> {
    let fail = |what: String| MdpError::ConstraintViolation {
        slot: state.slot,
        what,
    };
    if !state.policy.validate(scenario) {
        return Err(fail("beam budget |pi_b| <= M_b".into()));
    }
    for u in 0..scenario.num_users {
        if state.assoc.assoc_count(u) > scenario.max_assoc {
            return Err(fail(format!("user {u} exceeds B_u^max")));
        }
        for b in state.assoc.serving_msbs(u) {
            let sector = state.assoc.serving_sector(u, b).expect("serving link");
            if !state.policy.sectors(b).contains(sector) {
                return Err(fail(format!("link ({u},{b}) serves on an inactive sector")));
            }
            let budget = channel::sinr_mmwave(u, b, state, scenario, scenario.interference)
                .map_err(|e| fail(e.to_string()))?;
            if budget.sinr_db < scenario.sinr_threshold_db {
                return Err(fail(format!(
                    "link ({u},{b}) SINR {:.3} dB below threshold",
                    budget.sinr_db
                )));
            }
        }
    }
    Ok(())
}
