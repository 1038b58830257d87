//! Propagation and link-budget primitives for the microwave (MBS) and
//! mmWave (mSBS) bands.
//!
//! Everything here is a pure function of its inputs. Powers are carried in
//! dBm and gains/losses in dB; conversions to the linear domain happen only
//! where interference must be summed. The microwave "gain" is a path loss in
//! dB (larger means weaker), the floating-intercept mmWave model adds a
//! caller-supplied lognormal shadowing sample.

use thiserror::Error;

use crate::network::{MsbsId, NetworkState, Scenario, UserId, sector_of};

/// Radio-layer constants shared by every link computation.
///
/// Defaults are the usual simulation values: 2.1 GHz / 28 GHz carriers,
/// 100 MHz / 2 GHz bandwidths, kappa = 38.8 dB, rho = 2, alpha = 61.3 dB,
/// beta = 2.1, sigma^2 = 4 dB^2, 12/10 dB antenna gains, 50/37 dBm transmit
/// powers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioConstants {
    /// Microwave path-loss factor kappa in dB.
    pub kappa: f64,
    /// Microwave path-loss exponent rho.
    pub rho: f64,
    /// mmWave floating intercept alpha in dB.
    pub alpha: f64,
    /// mmWave slope beta.
    pub beta: f64,
    /// Lognormal shadowing variance sigma^2 in dB^2.
    pub sigma2: f64,
    /// mmWave transmit antenna gain in dB.
    pub g_tx: f64,
    /// mmWave receive antenna gain in dB.
    pub g_rx: f64,
    /// MBS transmit power per user in dBm.
    pub p_mbs: f64,
    /// mSBS transmit power per user in dBm.
    pub p_sbs: f64,
    /// MBS bandwidth in Hz.
    pub w_mbs: f64,
    /// Total mmWave bandwidth in Hz.
    pub w_mm: f64,
    /// MBS carrier frequency in Hz.
    pub f_mbs: f64,
    /// mmWave carrier frequency in Hz.
    pub f_mm: f64,
    /// Receiver noise figure in dB added onto thermal noise.
    pub noise_figure: f64,
}

impl Default for RadioConstants {
    fn default() -> Self {
        RadioConstants {
            kappa: 38.8,
            rho: 2.0,
            alpha: 61.3,
            beta: 2.1,
            sigma2: 4.0,
            g_tx: 12.0,
            g_rx: 10.0,
            p_mbs: 50.0,
            p_sbs: 37.0,
            w_mbs: 100e6,
            w_mm: 2e9,
            f_mbs: 2.1e9,
            f_mm: 28e9,
            noise_figure: 0.0,
        }
    }
}

impl RadioConstants {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.w_mbs <= 0.0 || self.w_mm <= 0.0 {
            return Err(ChannelError::InvalidConstants("bandwidths must be > 0"));
        }
        if self.rho <= 0.0 || self.beta <= 0.0 {
            return Err(ChannelError::InvalidConstants(
                "path-loss exponents must be > 0",
            ));
        }
        if self.sigma2 < 0.0 {
            return Err(ChannelError::InvalidConstants("sigma2 must be >= 0"));
        }
        Ok(())
    }
}

/// Whether mmWave SINR counts co-sector interference from other mSBSs or
/// approximates SINR by SNR (the simulation default, since spatially
/// orthogonal beams leave only negligible sidelobe interference).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterferenceMode {
    SnrOnly,
    Full,
}

/// Cached output of one link computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub rx_power_dbm: f64,
    pub sinr_db: f64,
    /// Total interference power in dBm; `f64::NEG_INFINITY` when there is no
    /// interferer.
    pub interference_dbm: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("no active beam of mSBS {msbs} covers user {user}")]
    NotCovered { user: UserId, msbs: MsbsId },
    #[error("invalid radio constants: {0}")]
    InvalidConstants(&'static str),
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn clamp_distance(d: f64) -> f64 {
    // Below 1 m the log-distance models lose meaning; clamp instead of erroring.
    d.max(1.0)
}

/// Microwave path gain h(d) = kappa + 10 * rho * log10(d) in dB.
pub fn microwave_gain(d: f64, c: &RadioConstants) -> f64 {
    c.kappa + 10.0 * c.rho * clamp_distance(d).log10()
}

/// mmWave path loss PL(d) = alpha + 10 * beta * log10(d) + xi in dB, where
/// `shadowing_db` is the caller's sample of xi ~ N(0, sigma^2) (pass 0 for
/// deterministic evaluation).
pub fn mmwave_pathloss(d: f64, shadowing_db: f64, c: &RadioConstants) -> f64 {
    c.alpha + 10.0 * c.beta * clamp_distance(d).log10() + shadowing_db
}

/// Thermal noise floor over `bandwidth`: -174 dBm/Hz + 10 log10(W) + NF.
pub fn noise_power_dbm(bandwidth: f64, c: &RadioConstants) -> f64 {
    debug_assert!(bandwidth > 0.0);
    -174.0 + 10.0 * bandwidth.log10() + c.noise_figure
}

/// Received power of an mmWave link at distance `d`:
/// p_sbs + G_tx + G_rx - PL(d).
pub fn mmwave_rx_power_dbm(d: f64, shadowing_db: f64, c: &RadioConstants) -> f64 {
    c.p_sbs + c.g_tx + c.g_rx - mmwave_pathloss(d, shadowing_db, c)
}

/// SINR of the MBS downlink for a user at distance `d` when the MBS serves
/// `n_users_on_mbs` users. Bandwidth is split evenly, there is no co-channel
/// interference, so the SINR equals the SNR over the per-user share.
pub fn sinr_mbs(d: f64, n_users_on_mbs: usize, c: &RadioConstants) -> LinkBudget {
    let n = n_users_on_mbs.max(1);
    let rx = c.p_mbs - microwave_gain(d, c);
    let noise = noise_power_dbm(c.w_mbs / n as f64, c);
    LinkBudget {
        rx_power_dbm: rx,
        sinr_db: rx - noise,
        interference_dbm: f64::NEG_INFINITY,
    }
}

/// SINR of the link from `serving` to user `u` under the current beam policy.
///
/// The numerator is the received power of the serving link; the denominator
/// is thermal noise plus, in [`InterferenceMode::Full`], the received power
/// of every other mSBS whose active beams cover the sector the user lies in.
/// Errors with [`ChannelError::NotCovered`] when no active beam of `serving`
/// covers the user.
pub fn sinr_mmwave(
    u: UserId,
    serving: MsbsId,
    state: &NetworkState,
    scenario: &Scenario,
    mode: InterferenceMode,
) -> Result<LinkBudget, ChannelError> {
    let pos = state.user_positions[u];
    let msbs = &scenario.msbs[serving];
    if !state.policy.sectors(serving).contains(sector_of(pos, msbs)) {
        return Err(ChannelError::NotCovered { user: u, msbs: serving });
    }
    let c = &scenario.radio;
    let d = pos.distance_to(msbs.position);
    let rx = mmwave_rx_power_dbm(d, state.shadowing_db(u, serving), c);
    let noise = noise_power_dbm(c.w_mm, c);

    let interference_mw = match mode {
        InterferenceMode::SnrOnly => 0.0,
        InterferenceMode::Full => scenario
            .msbs
            .iter()
            .filter(|k| k.id != serving)
            .filter(|k| state.policy.sectors(k.id).contains(sector_of(pos, k)))
            .map(|k| {
                let dk = pos.distance_to(k.position);
                dbm_to_mw(mmwave_rx_power_dbm(dk, state.shadowing_db(u, k.id), c))
            })
            .sum(),
    };

    if interference_mw == 0.0 {
        Ok(LinkBudget {
            rx_power_dbm: rx,
            sinr_db: rx - noise,
            interference_dbm: f64::NEG_INFINITY,
        })
    } else {
        let sinr = mw_to_dbm(dbm_to_mw(rx) / (dbm_to_mw(noise) + interference_mw));
        Ok(LinkBudget {
            rx_power_dbm: rx,
            sinr_db: sinr,
            interference_dbm: mw_to_dbm(interference_mw),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{
        NetworkState, Placement, Point, Scenario, ScenarioSpec, SectorSet,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn defaults() -> RadioConstants {
        RadioConstants::default()
    }

    #[test]
    fn microwave_gain_hand_values() {
        let c = defaults();
        assert_eq!(microwave_gain(1.0, &c), 38.8);
        assert!((microwave_gain(100.0, &c) - 78.8).abs() < 1e-12);
        assert!((microwave_gain(10.0, &c) - 58.8).abs() < 1e-12);
        // sub-meter distances clamp to 1 m
        assert_eq!(microwave_gain(0.2, &c), microwave_gain(1.0, &c));
    }

    #[test]
    fn mmwave_pathloss_hand_values() {
        let c = defaults();
        assert!((mmwave_pathloss(100.0, 0.0, &c) - 103.3).abs() < 1e-12);
        assert_eq!(mmwave_pathloss(1.0, 0.0, &c), 61.3);
        let expect = 61.3 + 21.0 * 30f64.log10();
        assert!((mmwave_pathloss(30.0, 0.0, &c) - expect).abs() < 1e-12);
        assert!((expect - 92.32).abs() < 5e-3);
        // shadowing shifts the loss one-for-one
        assert_eq!(
            mmwave_pathloss(30.0, 2.5, &c),
            mmwave_pathloss(30.0, 0.0, &c) + 2.5
        );
    }

    #[test]
    fn noise_power_hand_values() {
        let c = defaults();
        assert!((noise_power_dbm(2e9, &c) - -80.98970004336019).abs() < 1e-12);
        assert!((noise_power_dbm(1e8, &c) - -94.0).abs() < 1e-12);
        assert_eq!(noise_power_dbm(1.0, &c), -174.0);
    }

    #[test]
    fn sinr_mbs_hand_chain() {
        let c = defaults();
        let b = sinr_mbs(1.0, 1, &c);
        assert!((b.rx_power_dbm - 11.2).abs() < 1e-12);
        assert!((b.sinr_db - 105.2).abs() < 1e-12);
        assert_eq!(b.interference_dbm, f64::NEG_INFINITY);
        // doubling the user count halves the per-user bandwidth: +3 dB SINR
        let b2 = sinr_mbs(1.0, 2, &c);
        assert!((b2.sinr_db - b.sinr_db - 10.0 * 2f64.log10()).abs() < 1e-12);
    }

    fn one_link_state(d: f64) -> (Scenario, NetworkState) {
        let mut radio = defaults();
        radio.sigma2 = 0.0;
        let spec = ScenarioSpec {
            num_users: 1,
            num_msbs: 1,
            placement: Placement::Grid,
            radio,
            area: (400.0, 400.0),
            ..ScenarioSpec::default()
        };
        let scenario = Scenario::build(&spec, 1).unwrap();
        let mut state = NetworkState::init(&scenario);
        let origin = scenario.msbs[0].position;
        state.user_positions[0] = Point::new(origin.x + d, origin.y);
        state.policy.set_sectors(0, SectorSet::from_indices(&[0]));
        (scenario, state)
    }

    #[test]
    fn sinr_mmwave_hand_value() {
        let (scenario, state) = one_link_state(100.0);
        let b = sinr_mmwave(0, 0, &state, &scenario, InterferenceMode::SnrOnly).unwrap();
        assert!((b.rx_power_dbm - -44.3).abs() < 1e-12);
        assert!((b.sinr_db - 36.68970004336019).abs() < 1e-12);
    }

    #[test]
    fn sinr_mmwave_not_covered() {
        let (scenario, mut state) = one_link_state(100.0);
        state.policy.set_sectors(0, SectorSet::from_indices(&[3]));
        let err = sinr_mmwave(0, 0, &state, &scenario, InterferenceMode::SnrOnly).unwrap_err();
        assert_eq!(err, ChannelError::NotCovered { user: 0, msbs: 0 });
    }

    #[test]
    fn full_mode_without_interferers_equals_snr_only() {
        let (scenario, state) = one_link_state(42.0);
        let a = sinr_mmwave(0, 0, &state, &scenario, InterferenceMode::SnrOnly).unwrap();
        let b = sinr_mmwave(0, 0, &state, &scenario, InterferenceMode::Full).unwrap();
        assert_eq!(a, b);
    }

    fn two_interferer_state() -> (Scenario, NetworkState) {
        let mut radio = defaults();
        radio.sigma2 = 0.0;
        let spec = ScenarioSpec {
            num_users: 1,
            num_msbs: 3,
            placement: Placement::Grid,
            radio,
            area: (300.0, 300.0),
            ..ScenarioSpec::default()
        };
        let scenario = Scenario::build(&spec, 1).unwrap();
        let mut state = NetworkState::init(&scenario);
        state.user_positions[0] = Point::new(150.0, 40.0);
        for b in 0..3 {
            let s = sector_of(state.user_positions[0], &scenario.msbs[b]);
            state.policy.set_sectors(b, SectorSet::from_indices(&[s]));
        }
        (scenario, state)
    }

    #[test]
    fn full_mode_matches_linear_domain_oracle() {
        let (scenario, state) = two_interferer_state();
        let b = sinr_mmwave(0, 0, &state, &scenario, InterferenceMode::Full).unwrap();
        // brute-force linear-power sum over the interferers
        let c = &scenario.radio;
        let pos = state.user_positions[0];
        let s_mw = dbm_to_mw(mmwave_rx_power_dbm(
            pos.distance_to(scenario.msbs[0].position),
            0.0,
            c,
        ));
        let i_mw: f64 = [1usize, 2]
            .iter()
            .map(|&k| {
                dbm_to_mw(mmwave_rx_power_dbm(
                    pos.distance_to(scenario.msbs[k].position),
                    0.0,
                    c,
                ))
            })
            .sum();
        let n_mw = dbm_to_mw(noise_power_dbm(c.w_mm, c));
        let oracle = 10.0 * (s_mw / (n_mw + i_mw)).log10();
        assert!((b.sinr_db - oracle).abs() < 1e-9);
        // interference only subtracts
        let snr = sinr_mmwave(0, 0, &state, &scenario, InterferenceMode::SnrOnly).unwrap();
        assert!(b.sinr_db <= snr.sinr_db);
    }

    #[test]
    fn db_arithmetic_matches_linear_oracle_on_random_links() {
        let c = defaults();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..100 {
            let d = rng.random_range(1.0..200.0);
            let xi = rng.random_range(-6.0..6.0);
            let n_users = rng.random_range(1..20);

            let mbs = sinr_mbs(d, n_users, &c);
            let lin = dbm_to_mw(c.p_mbs) / dbm_to_mw(microwave_gain(d, &c))
                / dbm_to_mw(noise_power_dbm(c.w_mbs / n_users as f64, &c));
            assert!((mbs.sinr_db - 10.0 * lin.log10()).abs() < 1e-9);

            let rx = mmwave_rx_power_dbm(d, xi, &c);
            let lin_rx =
                dbm_to_mw(c.p_sbs) * db_to_linear(c.g_tx) * db_to_linear(c.g_rx)
                    / db_to_linear(mmwave_pathloss(d, xi, &c));
            assert!((dbm_to_mw(rx) - lin_rx).abs() / lin_rx < 1e-9);
        }
    }

    #[test]
    fn pathloss_monotone_in_distance() {
        let c = defaults();
        let mut prev_uw = microwave_gain(1.0, &c);
        let mut prev_mm = mmwave_pathloss(1.0, 0.0, &c);
        for i in 1..200 {
            let d = 1.0 + i as f64;
            let uw = microwave_gain(d, &c);
            let mm = mmwave_pathloss(d, 0.0, &c);
            assert!(uw > prev_uw && mm > prev_mm);
            prev_uw = uw;
            prev_mm = mm;
        }
    }

    #[test]
    fn zero_variance_shadowing_is_deterministic() {
        let mut radio = defaults();
        radio.sigma2 = 0.0;
        let spec = ScenarioSpec {
            radio,
            ..ScenarioSpec::default()
        };
        let scenario = Scenario::build(&spec, 9).unwrap();
        let state = NetworkState::init(&scenario);
        for u in 0..scenario.num_users {
            for b in 0..scenario.num_msbs() {
                assert_eq!(state.shadowing_db(u, b), 0.0);
            }
        }
    }
}
