//! Network topology, sector geometry, mobility, and throughput/coverage
//! metrics.
//!
//! A [`Scenario`] is the immutable description of one experiment (area,
//! stations, radio constants, thresholds); a [`NetworkState`] is the mutable
//! slotted state (user positions, beam policy, associations, shadowing). All
//! randomness flows through named ChaCha streams derived from the scenario
//! seed so that replications and schemes can share trajectories exactly.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::channel::{self, InterferenceMode, RadioConstants};

pub type UserId = usize;
pub type MsbsId = usize;
pub type SectorId = usize;

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance_to(&self, other: Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    /// Angle from `self` to `other` in degrees, normalized to [0, 360).
    pub fn angle_deg_to(&self, other: Point) -> f64 {
        let mut deg = (other.y - self.y).atan2(other.x - self.x).to_degrees();
        if deg < 0.0 {
            deg += 360.0;
        }
        deg
    }
}

/// A set of sector indices, backed by a bitmask (sector counts are small).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SectorSet(u64);

impl SectorSet {
    pub fn empty() -> Self {
        SectorSet(0)
    }

    pub fn from_indices(indices: &[SectorId]) -> Self {
        let mut mask = 0u64;
        for &i in indices {
            assert!(i < 64, "sector index {i} out of range");
            mask |= 1 << i;
        }
        SectorSet(mask)
    }

    pub fn insert(&mut self, i: SectorId) {
        assert!(i < 64, "sector index {i} out of range");
        self.0 |= 1 << i;
    }

    pub fn contains(&self, i: SectorId) -> bool {
        i < 64 && self.0 & (1 << i) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    /// Indices in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = SectorId> + '_ {
        (0..64).filter(|&i| self.contains(i))
    }
}

/// Static description of one mmWave small-cell base station.
#[derive(Debug, Clone)]
pub struct MsbsDesc {
    pub id: MsbsId,
    pub position: Point,
    /// Number of transmit sectors S_b (equal angular slices).
    pub sectors: usize,
    /// Maximum simultaneous beams M_b, with 0 < M_b <= S_b.
    pub max_beams: usize,
    /// Coverage radius in meters used for data cleaning and the sweep.
    pub coverage_radius: f64,
}

/// How mSBS positions are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// Uniform random placement within the area (seeded).
    Uniform,
    /// Deterministic grid, for reproducible small tests.
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MobilityModel {
    /// Per-slot displacement of speed * slot in a uniform random direction,
    /// reflected at the area boundary.
    RandomWalk,
    /// Move toward a uniformly drawn waypoint; redraw on arrival.
    RandomWaypoint,
}

/// Whether per-link lognormal shadowing is drawn once per episode or redrawn
/// every slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShadowingMode {
    PerEpisode,
    PerSlot,
}

/// Association ranking rule (see the association module).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AssocPolicy {
    /// Greedy strongest-received-power first (the default).
    MaxPower,
    /// Joint power/load score with proportion factors k1 + k2 = 1.
    LoadBalance(crate::association::BalanceWeights),
}

/// All scalar knobs needed to build a [`Scenario`]. Defaults reproduce the
/// standard simulation setup: 100 m x 100 m area, S_b = 8 sectors, M_b = 3
/// beams, B_u^max = 3, and the usual radio constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub area: (f64, f64),
    pub num_users: usize,
    pub num_msbs: usize,
    pub sectors: usize,
    pub max_beams: usize,
    pub coverage_radius: f64,
    pub max_assoc: usize,
    pub sinr_threshold_db: f64,
    pub power_threshold_dbm: f64,
    pub slot_seconds: f64,
    pub user_speed: f64,
    pub mobility: MobilityModel,
    pub placement: Placement,
    pub interference: InterferenceMode,
    pub shadowing: ShadowingMode,
    pub assoc_policy: AssocPolicy,
    pub radio: RadioConstants,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            area: (100.0, 100.0),
            num_users: 12,
            num_msbs: 3,
            sectors: 8,
            max_beams: 3,
            coverage_radius: 50.0,
            max_assoc: 3,
            sinr_threshold_db: -20.0,
            power_threshold_dbm: -60.0,
            slot_seconds: 1.0,
            user_speed: 1.0,
            mobility: MobilityModel::RandomWalk,
            placement: Placement::Uniform,
            interference: InterferenceMode::SnrOnly,
            shadowing: ShadowingMode::PerEpisode,
            assoc_policy: AssocPolicy::MaxPower,
            radio: RadioConstants::default(),
        }
    }
}

/// Named RNG streams derived from the scenario seed. Keeping mobility,
/// shadowing and learning on separate streams lets different schemes see
/// identical user trajectories for the same seed.
#[derive(Debug, Clone, Copy)]
pub enum RngStream {
    Topology,
    UserInit,
    Shadowing,
    Weights,
    MobilityTrain,
    MobilityEval,
    CentralLearner,
    Learner(MsbsId),
}

impl RngStream {
    fn id(self) -> u64 {
        match self {
            RngStream::Topology => 0,
            RngStream::UserInit => 1,
            RngStream::Shadowing => 2,
            RngStream::Weights => 3,
            RngStream::MobilityTrain => 4,
            RngStream::MobilityEval => 5,
            RngStream::CentralLearner => 9,
            RngStream::Learner(b) => 10 + b as u64,
        }
    }
}

/// Immutable description of one experiment instance.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub area: (f64, f64),
    pub mbs_position: Point,
    pub msbs: Vec<MsbsDesc>,
    pub num_users: usize,
    pub max_assoc: usize,
    pub sinr_threshold_db: f64,
    pub power_threshold_dbm: f64,
    pub slot_seconds: f64,
    pub user_speed: f64,
    pub mobility: MobilityModel,
    pub interference: InterferenceMode,
    pub shadowing: ShadowingMode,
    pub assoc_policy: AssocPolicy,
    pub radio: RadioConstants,
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

impl Scenario {
    /// Realize a scenario from a spec: validates invariants and places the
    /// mSBSs (uniform placement draws from the topology stream of `seed`).
    pub fn build(spec: &ScenarioSpec, seed: u64) -> Result<Scenario, ScenarioError> {
        if spec.num_users < 1 {
            return Err(ScenarioError::Invalid("num_users must be >= 1".into()));
        }
        if spec.sectors == 0 || spec.sectors > 64 {
            return Err(ScenarioError::Invalid(format!(
                "sectors must be in 1..=64, got {}",
                spec.sectors
            )));
        }
        if spec.max_beams == 0 || spec.max_beams > spec.sectors {
            return Err(ScenarioError::Invalid(format!(
                "max_beams must satisfy 0 < M_b <= S_b, got M_b={} S_b={}",
                spec.max_beams, spec.sectors
            )));
        }
        if spec.max_assoc < 1 {
            return Err(ScenarioError::Invalid("max_assoc must be >= 1".into()));
        }
        if spec.area.0 <= 0.0 || spec.area.1 <= 0.0 {
            return Err(ScenarioError::Invalid("area must be positive".into()));
        }
        spec.radio
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;

        let (w, h) = spec.area;
        let mut topo = stream_rng(seed, RngStream::Topology);
        let msbs = (0..spec.num_msbs)
            .map(|id| {
                let position = match spec.placement {
                    Placement::Uniform => {
                        Point::new(topo.random_range(0.0..w), topo.random_range(0.0..h))
                    }
                    Placement::Grid => grid_position(id, spec.num_msbs, w, h),
                };
                MsbsDesc {
                    id,
                    position,
                    sectors: spec.sectors,
                    max_beams: spec.max_beams,
                    coverage_radius: spec.coverage_radius,
                }
            })
            .collect();

        Ok(Scenario {
            area: spec.area,
            mbs_position: Point::new(w / 2.0, h / 2.0),
            msbs,
            num_users: spec.num_users,
            max_assoc: spec.max_assoc,
            sinr_threshold_db: spec.sinr_threshold_db,
            power_threshold_dbm: spec.power_threshold_dbm,
            slot_seconds: spec.slot_seconds,
            user_speed: spec.user_speed,
            mobility: spec.mobility,
            interference: spec.interference,
            shadowing: spec.shadowing,
            assoc_policy: spec.assoc_policy,
            radio: spec.radio,
            seed,
        })
    }

    pub fn num_msbs(&self) -> usize {
        self.msbs.len()
    }

    /// Seeded RNG for one named stream of this scenario.
    pub fn rng(&self, stream: RngStream) -> ChaCha8Rng {
        stream_rng(self.seed, stream)
    }
}

fn stream_rng(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

fn grid_position(id: usize, count: usize, w: f64, h: f64) -> Point {
    let cols = (count as f64).sqrt().ceil() as usize;
    let rows = count.div_ceil(cols);
    let col = id % cols;
    let row = id / cols;
    Point::new(
        (col as f64 + 0.5) * w / cols as f64,
        (row as f64 + 0.5) * h / rows as f64,
    )
}

/// The beam configuration pi_b(t) for every mSBS: which sectors each one
/// covers in the current slot. This is the decision variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeamPolicy {
    sets: Vec<SectorSet>,
}

impl BeamPolicy {
    pub fn empty(num_msbs: usize) -> Self {
        BeamPolicy {
            sets: vec![SectorSet::empty(); num_msbs],
        }
    }

    pub fn from_sets(sets: Vec<SectorSet>) -> Self {
        BeamPolicy { sets }
    }

    pub fn sectors(&self, b: MsbsId) -> SectorSet {
        self.sets[b]
    }

    pub fn set_sectors(&mut self, b: MsbsId, sectors: SectorSet) {
        self.sets[b] = sectors;
    }

    pub fn num_msbs(&self) -> usize {
        self.sets.len()
    }

    /// Check the beam budget |pi_b| <= M_b and sector ranges.
    pub fn validate(&self, scenario: &Scenario) -> bool {
        self.sets.len() == scenario.num_msbs()
            && self.sets.iter().zip(&scenario.msbs).all(|(set, m)| {
                set.len() <= m.max_beams && set.iter().all(|s| s < m.sectors)
            })
    }
}

/// Binary association matrix x_{u,b} plus the serving sector per active link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssociationState {
    serving: Vec<Vec<Option<SectorId>>>,
}

impl AssociationState {
    pub fn empty(num_users: usize, num_msbs: usize) -> Self {
        AssociationState {
            serving: vec![vec![None; num_msbs]; num_users],
        }
    }

    /// x_{u,b}
    pub fn is_associated(&self, u: UserId, b: MsbsId) -> bool {
        self.serving[u][b].is_some()
    }

    pub fn serving_sector(&self, u: UserId, b: MsbsId) -> Option<SectorId> {
        self.serving[u][b]
    }

    pub fn associate(&mut self, u: UserId, b: MsbsId, sector: SectorId) {
        self.serving[u][b] = Some(sector);
    }

    /// The set of mSBSs serving user u (their ids, ascending).
    pub fn serving_msbs(&self, u: UserId) -> impl Iterator<Item = MsbsId> + '_ {
        self.serving[u]
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_some())
            .map(|(b, _)| b)
    }

    /// B_u(t) = number of mSBSs serving user u.
    pub fn assoc_count(&self, u: UserId) -> usize {
        self.serving[u].iter().filter(|s| s.is_some()).count()
    }

    /// N_b(t) = number of users served by mSBS b.
    pub fn users_of(&self, b: MsbsId) -> usize {
        self.serving.iter().filter(|row| row[b].is_some()).count()
    }

    /// Total number of active (user, mSBS) links.
    pub fn total_links(&self) -> usize {
        self.serving
            .iter()
            .map(|row| row.iter().filter(|s| s.is_some()).count())
            .sum()
    }

    /// N_mbs(t): users in single-mode (no mmWave association).
    pub fn single_mode_count(&self) -> usize {
        self.serving
            .iter()
            .filter(|row| row.iter().all(|s| s.is_none()))
            .count()
    }

    pub fn num_users(&self) -> usize {
        self.serving.len()
    }
}

/// Mutable time-slotted network state.
#[derive(Debug, Clone)]
pub struct NetworkState {
    pub slot: u64,
    pub user_positions: Vec<Point>,
    pub policy: BeamPolicy,
    pub assoc: AssociationState,
    /// Lognormal shadowing draw per (user, mSBS) link, in dB.
    shadowing: Vec<f64>,
    shadow_rng: ChaCha8Rng,
    waypoints: Vec<Point>,
}

impl NetworkState {
    /// Fresh state at slot 0: users placed uniformly from the user-init
    /// stream, shadowing drawn from the shadowing stream, empty policy and
    /// associations. Fully determined by the scenario.
    pub fn init(scenario: &Scenario) -> Self {
        let (w, h) = scenario.area;
        let mut rng = scenario.rng(RngStream::UserInit);
        let user_positions: Vec<Point> = (0..scenario.num_users)
            .map(|_| Point::new(rng.random_range(0.0..w), rng.random_range(0.0..h)))
            .collect();
        let waypoints = match scenario.mobility {
            MobilityModel::RandomWaypoint => (0..scenario.num_users)
                .map(|_| Point::new(rng.random_range(0.0..w), rng.random_range(0.0..h)))
                .collect(),
            MobilityModel::RandomWalk => Vec::new(),
        };
        let mut shadow_rng = scenario.rng(RngStream::Shadowing);
        let shadowing = draw_shadowing(scenario, &mut shadow_rng);
        NetworkState {
            slot: 0,
            user_positions,
            policy: BeamPolicy::empty(scenario.num_msbs()),
            assoc: AssociationState::empty(scenario.num_users, scenario.num_msbs()),
            shadowing,
            shadow_rng,
            waypoints,
        }
    }

    pub fn shadowing_db(&self, u: UserId, b: MsbsId) -> f64 {
        self.shadowing[u * self.policy.num_msbs() + b]
    }

    /// Redraw the shadowing table (per-slot mode only; called by `step`).
    pub fn redraw_shadowing(&mut self, scenario: &Scenario) {
        self.shadowing = draw_shadowing(scenario, &mut self.shadow_rng);
    }
}

fn draw_shadowing(scenario: &Scenario, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sigma = scenario.radio.sigma2.sqrt();
    let n = scenario.num_users * scenario.num_msbs();
    if sigma == 0.0 {
        return vec![0.0; n];
    }
    let normal = Normal::new(0.0, sigma).expect("sigma must be finite and non-negative");
    (0..n).map(|_| normal.sample(rng)).collect()
}

/// Index of the sector of `msbs` containing `user`: sector 0 starts due east
/// and sectors proceed counterclockwise.
pub fn sector_of(user: Point, msbs: &MsbsDesc) -> SectorId {
    let deg = msbs.position.angle_deg_to(user);
    let idx = (msbs.sectors as f64 * deg / 360.0).floor() as usize;
    idx.min(msbs.sectors - 1)
}

fn reflect(mut v: f64, hi: f64) -> f64 {
    // Fold into [0, hi] by mirroring at both walls.
    let period = 2.0 * hi;
    v = v.rem_euclid(period);
    if v > hi {
        v = period - v;
    }
    v
}

/// Move every user one slot according to the scenario's mobility model.
pub fn advance_users(state: &mut NetworkState, scenario: &Scenario, rng: &mut ChaCha8Rng) {
    let (w, h) = scenario.area;
    let step = scenario.user_speed * scenario.slot_seconds;
    match scenario.mobility {
        MobilityModel::RandomWalk => {
            for pos in &mut state.user_positions {
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                pos.x = reflect(pos.x + step * theta.cos(), w);
                pos.y = reflect(pos.y + step * theta.sin(), h);
            }
        }
        MobilityModel::RandomWaypoint => {
            for (pos, wp) in state.user_positions.iter_mut().zip(&mut state.waypoints) {
                let dist = pos.distance_to(*wp);
                if dist <= step {
                    *pos = *wp;
                    *wp = Point::new(rng.random_range(0.0..w), rng.random_range(0.0..h));
                } else {
                    pos.x += step * (wp.x - pos.x) / dist;
                    pos.y += step * (wp.y - pos.y) / dist;
                }
            }
        }
    }
}

/// Per-user achievable rate in bit/s: sum over serving mmWave links of
/// W_mm * log2(1 + SINR), or the MBS share (W_mbs / N_mbs) * log2(1 + SINR)
/// for single-mode users. SINRs enter in the linear domain.
pub fn user_rate(u: UserId, state: &NetworkState, scenario: &Scenario) -> f64 {
    let serving: Vec<MsbsId> = state.assoc.serving_msbs(u).collect();
    if serving.is_empty() {
        let n_mbs = state.assoc.single_mode_count().max(1);
        mbs_rate(u, n_mbs, state, scenario)
    } else {
        serving
            .iter()
            .map(|&b| {
                let budget = channel::sinr_mmwave(u, b, state, scenario, scenario.interference)
                    .expect("active link must be covered by a beam");
                scenario.radio.w_mm * (1.0 + channel::db_to_linear(budget.sinr_db)).log2()
            })
            .sum()
    }
}

fn mbs_rate(u: UserId, n_mbs: usize, state: &NetworkState, scenario: &Scenario) -> f64 {
    let d = state.user_positions[u].distance_to(scenario.mbs_position);
    let budget = channel::sinr_mbs(d, n_mbs, &scenario.radio);
    (scenario.radio.w_mbs / n_mbs as f64) * (1.0 + channel::db_to_linear(budget.sinr_db)).log2()
}

/// System throughput R(t): the sum of all user rates.
pub fn system_throughput(state: &NetworkState, scenario: &Scenario) -> f64 {
    (0..scenario.num_users)
        .map(|u| user_rate(u, state, scenario))
        .sum()
}

/// Multi-association user coverage: sum_b N_b / (U * min(B, B_u^max)).
pub fn user_coverage(state: &NetworkState, scenario: &Scenario) -> f64 {
    let denom = scenario.num_users * scenario.num_msbs().min(scenario.max_assoc);
    if denom == 0 {
        return 0.0;
    }
    state.assoc.total_links() as f64 / denom as f64
}

/// (users per km^2, mSBSs per km^2).
pub fn densities(scenario: &Scenario) -> (f64, f64) {
    let area_km2 = scenario.area.0 * scenario.area.1 / 1e6;
    (
        scenario.num_users as f64 / area_km2,
        scenario.num_msbs() as f64 / area_km2,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn test_scenario(spec: ScenarioSpec, seed: u64) -> Scenario {
        Scenario::build(&spec, seed).expect("valid spec")
    }

    fn msbs_at(position: Point, sectors: usize) -> MsbsDesc {
        MsbsDesc {
            id: 0,
            position,
            sectors,
            max_beams: sectors,
            coverage_radius: 50.0,
        }
    }

    #[test]
    fn sector_of_matches_angular_slices() {
        let m = msbs_at(Point::new(0.0, 0.0), 8);
        assert_eq!(sector_of(Point::new(10.0, 0.0), &m), 0);
        assert_eq!(sector_of(Point::new(0.0, 10.0), &m), 2);
        // 359.9 degrees
        let theta = 359.9f64.to_radians();
        assert_eq!(sector_of(Point::new(theta.cos(), theta.sin()), &m), 7);
    }

    #[test]
    fn sector_set_roundtrip() {
        let s = SectorSet::from_indices(&[4, 0, 2]);
        assert_eq!(s.len(), 3);
        assert!(s.contains(0) && s.contains(2) && s.contains(4));
        assert!(!s.contains(1));
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 2, 4]);
        assert!(SectorSet::empty().is_empty());
    }

    #[test]
    fn zero_speed_keeps_positions() {
        let spec = ScenarioSpec {
            user_speed: 0.0,
            ..ScenarioSpec::default()
        };
        let scenario = test_scenario(spec, 7);
        let mut state = NetworkState::init(&scenario);
        let before = state.user_positions.clone();
        let mut rng = scenario.rng(RngStream::MobilityTrain);
        advance_users(&mut state, &scenario, &mut rng);
        assert_eq!(state.user_positions, before);
    }

    #[test]
    fn mobility_is_deterministic_per_seed() {
        let scenario = test_scenario(ScenarioSpec::default(), 11);
        let run = |scenario: &Scenario| {
            let mut state = NetworkState::init(scenario);
            let mut rng = scenario.rng(RngStream::MobilityTrain);
            for _ in 0..50 {
                advance_users(&mut state, scenario, &mut rng);
            }
            state.user_positions
        };
        assert_eq!(run(&scenario), run(&scenario));
    }

    #[test]
    fn random_walk_stays_in_bounds() {
        for mobility in [MobilityModel::RandomWalk, MobilityModel::RandomWaypoint] {
            let spec = ScenarioSpec {
                user_speed: 37.0, // long hops stress the reflection
                num_users: 5,
                mobility,
                ..ScenarioSpec::default()
            };
            let scenario = test_scenario(spec, 3);
            let mut state = NetworkState::init(&scenario);
            let mut rng = scenario.rng(RngStream::MobilityTrain);
            for _ in 0..10_000 {
                advance_users(&mut state, &scenario, &mut rng);
                for p in &state.user_positions {
                    assert!(p.x >= 0.0 && p.x <= 100.0 && p.y >= 0.0 && p.y <= 100.0);
                }
            }
        }
    }

    #[test]
    fn coverage_matches_worked_example() {
        // U=1, B=4, B_u^max=3, associations with mSBSs 1 and 3 -> 66.67%.
        let spec = ScenarioSpec {
            num_users: 1,
            num_msbs: 4,
            ..ScenarioSpec::default()
        };
        let scenario = test_scenario(spec, 1);
        let mut state = NetworkState::init(&scenario);
        state.assoc.associate(0, 1, 0);
        state.assoc.associate(0, 3, 0);
        let cov = user_coverage(&state, &scenario);
        assert!((cov - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn coverage_bounds() {
        let spec = ScenarioSpec {
            num_users: 2,
            num_msbs: 2,
            max_assoc: 3,
            ..ScenarioSpec::default()
        };
        let scenario = test_scenario(spec, 1);
        let mut state = NetworkState::init(&scenario);
        assert_eq!(user_coverage(&state, &scenario), 0.0);
        for u in 0..2 {
            for b in 0..2 {
                state.assoc.associate(u, b, 0);
            }
        }
        // every user associated to min(B, B_u^max) = 2 mSBSs
        assert_eq!(user_coverage(&state, &scenario), 1.0);
    }

    #[test]
    fn densities_match_hand_values() {
        let spec = ScenarioSpec {
            num_users: 20,
            num_msbs: 6,
            ..ScenarioSpec::default()
        };
        let scenario = test_scenario(spec, 1);
        let (du, db) = densities(&scenario);
        assert!((du - 2000.0).abs() < 1e-9);
        assert!((db - 600.0).abs() < 1e-9);
    }

    #[test]
    fn rate_single_mmwave_link_at_unit_sinr() {
        // Pick constants so the mmWave link lands at exactly linear SINR = 1:
        // rx == noise when p + gT + gR - PL(d) == noise.
        let mut radio = RadioConstants::default();
        radio.sigma2 = 0.0;
        let spec = ScenarioSpec {
            num_users: 1,
            num_msbs: 1,
            radio,
            ..ScenarioSpec::default()
        };
        let scenario = test_scenario(spec, 1);
        let mut state = NetworkState::init(&scenario);
        // Place the user so that rx power equals the 2 GHz noise floor.
        let noise = channel::noise_power_dbm(scenario.radio.w_mm, &scenario.radio);
        let target_pl = scenario.radio.p_sbs + scenario.radio.g_tx + scenario.radio.g_rx - noise;
        let d = 10f64.powf((target_pl - scenario.radio.alpha) / (10.0 * scenario.radio.beta));
        let origin = scenario.msbs[0].position;
        state.user_positions[0] = Point::new(origin.x + d, origin.y);
        state.policy.set_sectors(0, SectorSet::from_indices(&[sector_of(
            state.user_positions[0],
            &scenario.msbs[0],
        )]));
        state.assoc.associate(0, 0, 0);
        let rate = user_rate(0, &state, &scenario);
        // W_mm * log2(2) = 2e9
        assert!((rate - 2e9).abs() / 2e9 < 1e-9, "rate = {rate}");
    }

    #[test]
    fn rate_mbs_share() {
        // Single-mode branch: (W_mbs / N_mbs) * log2(1 + SINR). Force linear
        // SINR = 3 by choosing the MBS transmit power for a known distance.
        let mut radio = RadioConstants::default();
        radio.sigma2 = 0.0;
        // At d = 10 the path gain is kappa + 10*rho = 58.8 dB. Noise over
        // W_mbs/10 = 10 MHz is -104 dBm. SINR = p - 58.8 + 104 = 10*log10(3).
        radio.p_mbs = 10.0 * 3f64.log10() + 58.8 - 104.0;
        let spec = ScenarioSpec {
            num_users: 10,
            num_msbs: 1,
            radio,
            ..ScenarioSpec::default()
        };
        let scenario = test_scenario(spec, 1);
        let mut state = NetworkState::init(&scenario);
        for u in 0..10 {
            state.user_positions[u] = Point::new(scenario.mbs_position.x + 10.0, scenario.mbs_position.y);
        }
        let rate = user_rate(0, &state, &scenario);
        let expect = 1e8 / 10.0 * 2.0; // log2(1+3) = 2
        assert!((rate - expect).abs() / expect < 1e-9, "rate = {rate}");
    }

    #[test]
    fn rate_additivity_over_links() {
        let mut radio = RadioConstants::default();
        radio.sigma2 = 0.0;
        let spec = ScenarioSpec {
            num_users: 1,
            num_msbs: 2,
            placement: Placement::Grid,
            radio,
            ..ScenarioSpec::default()
        };
        let scenario = test_scenario(spec, 1);
        let mut state = NetworkState::init(&scenario);
        state.user_positions[0] = Point::new(30.0, 30.0);
        for b in 0..2 {
            let s = sector_of(state.user_positions[0], &scenario.msbs[b]);
            state.policy.set_sectors(b, SectorSet::from_indices(&[s]));
            state.assoc.associate(0, b, s);
        }
        let both = user_rate(0, &state, &scenario);
        let mut only_first = state.clone();
        only_first.assoc = AssociationState::empty(1, 2);
        only_first
            .assoc
            .associate(0, 0, state.assoc.serving_sector(0, 0).unwrap());
        let mut only_second = state.clone();
        only_second.assoc = AssociationState::empty(1, 2);
        only_second
            .assoc
            .associate(0, 1, state.assoc.serving_sector(0, 1).unwrap());
        let sum = user_rate(0, &only_first, &scenario) + user_rate(0, &only_second, &scenario);
        assert!((both - sum).abs() / sum < 1e-12);
    }

    #[test]
    fn throughput_is_sum_of_user_rates() {
        let scenario = test_scenario(
            ScenarioSpec {
                num_users: 3,
                ..ScenarioSpec::default()
            },
            5,
        );
        let state = NetworkState::init(&scenario);
        let total = system_throughput(&state, &scenario);
        let by_hand: f64 = (0..3).map(|u| user_rate(u, &state, &scenario)).sum();
        assert_eq!(total, by_hand);
        assert!(total >= 0.0);
    }

    #[test]
    fn grid_placement_is_deterministic() {
        let spec = ScenarioSpec {
            placement: Placement::Grid,
            num_msbs: 4,
            ..ScenarioSpec::default()
        };
        let a = test_scenario(spec.clone(), 1);
        let b = test_scenario(spec, 99);
        for (x, y) in a.msbs.iter().zip(&b.msbs) {
            assert_eq!(x.position, y.position);
        }
    }

    #[test]
    fn build_rejects_bad_specs() {
        let bad_beams = ScenarioSpec {
            max_beams: 9,
            sectors: 8,
            ..ScenarioSpec::default()
        };
        assert!(Scenario::build(&bad_beams, 1).is_err());
        let bad_area = ScenarioSpec {
            area: (0.0, 100.0),
            ..ScenarioSpec::default()
        };
        assert!(Scenario::build(&bad_area, 1).is_err());
    }
}
