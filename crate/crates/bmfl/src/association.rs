//! Microwave-assisted mmWave association.
//!
//! Three phases per slot: (1) every mSBS sweeps association frames over its
//! active sectors only, (2) users listening omnidirectionally report the
//! beams whose received power clears the threshold, (3) each user greedily
//! associates with its strongest candidates (one beam per mSBS) up to
//! B_u^max, admitting a link only when its SINR clears the threshold chi.
//! Users ending with no mmWave link stay in single-mode on the MBS.
//!
//! Associations are rebuilt from scratch every slot; there is no handover
//! state.

use thiserror::Error;

use crate::channel::{self, dbm_to_mw};
use crate::network::{
    AssocPolicy, AssociationState, MsbsId, NetworkState, Scenario, SectorId, UserId, sector_of,
};

/// One swept beam a user perceived above the power threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerceptionEntry {
    pub user: UserId,
    pub msbs: MsbsId,
    pub sector: SectorId,
    pub rx_power_dbm: f64,
}

/// All perceived beams for one slot, ordered by (user, mSBS, sector).
#[derive(Debug, Clone, Default)]
pub struct PerceptionReport {
    pub entries: Vec<PerceptionEntry>,
}

impl PerceptionReport {
    /// Candidate serving set of user u: distinct mSBS ids, ascending.
    pub fn candidates(&self, u: UserId) -> Vec<MsbsId> {
        let mut out: Vec<MsbsId> = self
            .entries
            .iter()
            .filter(|e| e.user == u)
            .map(|e| e.msbs)
            .collect();
        out.dedup();
        out
    }
}

/// Proportion factors for the joint power/load association score, with
/// k1 + k2 = 1 and both strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceWeights {
    k1: f64,
    k2: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum AssociationError {
    #[error("proportion factors must satisfy k1 + k2 = 1 with both in (0,1), got k1={k1} k2={k2}")]
    InvalidWeights { k1: f64, k2: f64 },
}

impl BalanceWeights {
    pub fn new(k1: f64, k2: f64) -> Result<Self, AssociationError> {
        let ok = k1 > 0.0 && k1 < 1.0 && k2 > 0.0 && k2 < 1.0 && (k1 + k2 - 1.0).abs() < 1e-12;
        if ok {
            Ok(BalanceWeights { k1, k2 })
        } else {
            Err(AssociationError::InvalidWeights { k1, k2 })
        }
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn k2(&self) -> f64 {
        self.k2
    }
}

/// Sweep phase: for every active beam whose sector contains a user within
/// the coverage radius, record the perceived power when it clears the
/// scenario's power threshold.
pub fn sweep_and_perceive(state: &NetworkState, scenario: &Scenario) -> PerceptionReport {
    let mut entries = Vec::new();
    for (u, &pos) in state.user_positions.iter().enumerate() {
        for msbs in &scenario.msbs {
            let d = pos.distance_to(msbs.position);
            if d > msbs.coverage_radius {
                continue;
            }
            let sector = sector_of(pos, msbs);
            if !state.policy.sectors(msbs.id).contains(sector) {
                continue;
            }
            let rx = channel::mmwave_rx_power_dbm(d, state.shadowing_db(u, msbs.id), &scenario.radio);
            if rx >= scenario.power_threshold_dbm {
                entries.push(PerceptionEntry {
                    user: u,
                    msbs: msbs.id,
                    sector,
                    rx_power_dbm: rx,
                });
            }
        }
    }
    PerceptionReport { entries }
}

/// Joint power/load priority score: k1 * zeta/varsigma + k2 * U/load, with
/// the power ratio taken in linear milliwatts (dB-domain division would not
/// rank correctly). A load of zero counts as one.
pub fn balance_score(
    zeta_dbm: f64,
    varsigma_dbm: f64,
    load_b: usize,
    num_users: usize,
    k1: f64,
    k2: f64,
) -> f64 {
    let power_ratio = dbm_to_mw(zeta_dbm) / dbm_to_mw(varsigma_dbm);
    k1 * power_ratio + k2 * num_users as f64 / load_b.max(1) as f64
}

/// Association phase: per user, repeatedly pick the best remaining candidate
/// beam (max power by default, or max balance score), admit it when the link
/// SINR clears chi, and drop that mSBS from the candidate set, until
/// B_u^max links are held or candidates run out. Ties go to the lower mSBS
/// id, then the lower sector id.
pub fn associate(
    report: &PerceptionReport,
    scenario: &Scenario,
    state: &NetworkState,
) -> AssociationState {
    let num_msbs = scenario.num_msbs();
    let mut assoc = AssociationState::empty(scenario.num_users, num_msbs);
    let mut load = vec![0usize; num_msbs];

    for u in 0..scenario.num_users {
        let mut cands: Vec<&PerceptionEntry> =
            report.entries.iter().filter(|e| e.user == u).collect();
        let mut held = 0usize;
        while held < scenario.max_assoc && !cands.is_empty() {
            // Entries are (msbs, sector)-ascending, so the first strict max
            // realizes the tie rule.
            let best = cands
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let score = match scenario.assoc_policy {
                        AssocPolicy::MaxPower => e.rx_power_dbm,
                        AssocPolicy::LoadBalance(w) => balance_score(
                            e.rx_power_dbm,
                            scenario.power_threshold_dbm,
                            load[e.msbs],
                            scenario.num_users,
                            w.k1(),
                            w.k2(),
                        ),
                    };
                    (i, score)
                })
                .fold((usize::MAX, f64::NEG_INFINITY), |acc, (i, s)| {
                    if s > acc.1 { (i, s) } else { acc }
                })
                .0;
            let entry = *cands[best];
            let budget = channel::sinr_mmwave(u, entry.msbs, state, scenario, scenario.interference)
                .expect("perceived beam must be active");
            if budget.sinr_db >= scenario.sinr_threshold_db {
                assoc.associate(u, entry.msbs, entry.sector);
                load[entry.msbs] += 1;
                held += 1;
            }
            cands.retain(|e| e.msbs != entry.msbs);
        }
    }
    assoc
}
