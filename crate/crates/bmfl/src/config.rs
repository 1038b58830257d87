//! Flat key/value experiment configuration.
//!
//! One `key = value` per line, `#` starts a comment, lists are
//! comma-separated. Every key has a default matching the standard simulation
//! setup, so an empty file runs the stock scenario. Unknown keys are errors,
//! as are out-of-range values.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::association::BalanceWeights;
use crate::baselines::SchemeId;
use crate::channel::InterferenceMode;
use crate::deepq::{DataWeighting, Hyperparams};
use crate::network::{AssocPolicy, MobilityModel, Placement, ScenarioSpec, ShadowingMode};

/// Which scenario/learning knob a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    SinrThreshold,
    UserDensity,
    MsbsDensity,
    LearningRate,
}

impl std::fmt::Display for SweepVar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SweepVar::SinrThreshold => "sinrThreshold",
            SweepVar::UserDensity => "userDensity",
            SweepVar::MsbsDensity => "msbsDensity",
            SweepVar::LearningRate => "learningRate",
        };
        f.write_str(s)
    }
}

impl FromStr for SweepVar {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sinrThreshold" => Ok(SweepVar::SinrThreshold),
            "userDensity" => Ok(SweepVar::UserDensity),
            "msbsDensity" => Ok(SweepVar::MsbsDensity),
            "learningRate" => Ok(SweepVar::LearningRate),
            other => Err(format!(
                "unknown sweep '{other}' (expected sinrThreshold|userDensity|msbsDensity|learningRate)"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("invalid configuration: {0}")]
    Range(String),
}

/// The resolved experiment description: base scenario, hyperparameters,
/// scheme, sweep grid, and harness knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub spec: ScenarioSpec,
    pub hp: Hyperparams,
    pub scheme: SchemeId,
    pub sweep: SweepVar,
    pub values: Vec<f64>,
    pub replications: usize,
    /// Communication rounds J per training run.
    pub rounds: u64,
    /// Greedy evaluation slots after training (or per static-scheme run).
    pub eval_slots: usize,
    /// Unmeasured settling slots before the evaluation window.
    pub eval_warmup: usize,
    pub base_seed: u64,
    /// Enumeration budget for brute-force search.
    pub budget: u64,
    /// Joint-action budget for centralized training before it falls back to
    /// the per-agent decomposition.
    pub joint_budget: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            spec: ScenarioSpec::default(),
            hp: Hyperparams::default(),
            scheme: SchemeId::Bmfl,
            sweep: SweepVar::SinrThreshold,
            values: vec![-20.0],
            replications: 10,
            rounds: 50,
            eval_slots: 10,
            eval_warmup: 2,
            base_seed: 1,
            budget: 1_000_000,
            joint_budget: 4096,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        // LoadBalance factors arrive as two separate keys.
        let mut k1 = 0.5;
        let mut k2 = 0.5;
        let mut balance = false;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Parse {
                    line,
                    message: format!("expected 'key = value', got '{content}'"),
                });
            };
            let key = key.trim();
            let value = value.trim();
            let parse_err = |message: String| ConfigError::Parse { line, message };
            macro_rules! num {
                ($ty:ty) => {
                    value
                        .parse::<$ty>()
                        .map_err(|e| parse_err(format!("'{value}': {e}")))?
                };
            }
            match key {
                // scenario
                "users" => cfg.spec.num_users = num!(usize),
                "msbs" => cfg.spec.num_msbs = num!(usize),
                "sectors" => cfg.spec.sectors = num!(usize),
                "maxBeams" => cfg.spec.max_beams = num!(usize),
                "maxAssoc" => cfg.spec.max_assoc = num!(usize),
                "coverageRadius" => cfg.spec.coverage_radius = num!(f64),
                "sinrThreshold" => cfg.spec.sinr_threshold_db = num!(f64),
                "powerThreshold" => cfg.spec.power_threshold_dbm = num!(f64),
                "areaWidth" => cfg.spec.area.0 = num!(f64),
                "areaHeight" => cfg.spec.area.1 = num!(f64),
                "slotSeconds" => cfg.spec.slot_seconds = num!(f64),
                "userSpeed" => cfg.spec.user_speed = num!(f64),
                "mobility" => {
                    cfg.spec.mobility = match value {
                        "randomWalk" => MobilityModel::RandomWalk,
                        "randomWaypoint" => MobilityModel::RandomWaypoint,
                        other => {
                            return Err(parse_err(format!(
                                "unknown mobility '{other}' (randomWalk|randomWaypoint)"
                            )));
                        }
                    }
                }
                "placement" => {
                    cfg.spec.placement = match value {
                        "uniform" => Placement::Uniform,
                        "grid" => Placement::Grid,
                        other => {
                            return Err(parse_err(format!(
                                "unknown placement '{other}' (uniform|grid)"
                            )));
                        }
                    }
                }
                "interference" => {
                    cfg.spec.interference = match value {
                        "snrOnly" => InterferenceMode::SnrOnly,
                        "full" => InterferenceMode::Full,
                        other => {
                            return Err(parse_err(format!(
                                "unknown interference mode '{other}' (snrOnly|full)"
                            )));
                        }
                    }
                }
                "shadowingMode" => {
                    cfg.spec.shadowing = match value {
                        "perEpisode" => ShadowingMode::PerEpisode,
                        "perSlot" => ShadowingMode::PerSlot,
                        other => {
                            return Err(parse_err(format!(
                                "unknown shadowing mode '{other}' (perEpisode|perSlot)"
                            )));
                        }
                    }
                }
                "associationPolicy" => match value {
                    "maxPower" => balance = false,
                    "loadBalance" => balance = true,
                    other => {
                        return Err(parse_err(format!(
                            "unknown association policy '{other}' (maxPower|loadBalance)"
                        )));
                    }
                },
                "k1" => k1 = num!(f64),
                "k2" => k2 = num!(f64),
                // radio
                "kappa" => cfg.spec.radio.kappa = num!(f64),
                "rho" => cfg.spec.radio.rho = num!(f64),
                "alpha" => cfg.spec.radio.alpha = num!(f64),
                "beta" => cfg.spec.radio.beta = num!(f64),
                "sigma2" => cfg.spec.radio.sigma2 = num!(f64),
                "txGain" => cfg.spec.radio.g_tx = num!(f64),
                "rxGain" => cfg.spec.radio.g_rx = num!(f64),
                "mbsPower" => cfg.spec.radio.p_mbs = num!(f64),
                "sbsPower" => cfg.spec.radio.p_sbs = num!(f64),
                "mbsBandwidth" => cfg.spec.radio.w_mbs = num!(f64),
                "mmBandwidth" => cfg.spec.radio.w_mm = num!(f64),
                "mbsCarrier" => cfg.spec.radio.f_mbs = num!(f64),
                "mmCarrier" => cfg.spec.radio.f_mm = num!(f64),
                "noiseFigure" => cfg.spec.radio.noise_figure = num!(f64),
                // learning
                "discount" => cfg.hp.gamma = num!(f64),
                "learningRate" => cfg.hp.alpha = num!(f64),
                "localLearningRate" => cfg.hp.lambda = num!(f64),
                "epsilonStart" => cfg.hp.epsilon_start = num!(f64),
                "epsilonMin" => cfg.hp.epsilon_min = num!(f64),
                "epsilonDecay" => cfg.hp.epsilon_decay = num!(f64),
                "targetInterval" => cfg.hp.target_interval = num!(u64),
                "minibatch" => cfg.hp.minibatch = num!(usize),
                "replayCapacity" => cfg.hp.replay_capacity = num!(usize),
                "slotsPerRound" => cfg.hp.tau = num!(usize),
                "rewardScale" => {
                    cfg.hp.reward_scale = if value == "auto" {
                        None
                    } else {
                        Some(num!(f64))
                    }
                }
                "eta" => cfg.hp.eta = num!(f64),
                "dataWeighting" => {
                    cfg.hp.data_weighting = match value {
                        "participants" => DataWeighting::Participants,
                        "slots" => DataWeighting::SlotsOnly,
                        other => {
                            return Err(parse_err(format!(
                                "unknown data weighting '{other}' (participants|slots)"
                            )));
                        }
                    }
                }
                // harness
                "scheme" => cfg.scheme = value.parse().map_err(parse_err)?,
                "sweep" => cfg.sweep = value.parse().map_err(parse_err)?,
                "values" => {
                    cfg.values = value
                        .split(',')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<Result<Vec<f64>, _>>()
                        .map_err(|e| parse_err(format!("'{value}': {e}")))?;
                }
                "replications" => cfg.replications = num!(usize),
                "rounds" => cfg.rounds = num!(u64),
                "evalSlots" => cfg.eval_slots = num!(usize),
                "evalWarmup" => cfg.eval_warmup = num!(usize),
                "seed" => cfg.base_seed = num!(u64),
                "budget" => cfg.budget = num!(u64),
                "jointBudget" => cfg.joint_budget = num!(u64),
                other => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: other.to_string(),
                    });
                }
            }
        }

        if balance {
            let weights = BalanceWeights::new(k1, k2)
                .map_err(|e| ConfigError::Range(e.to_string()))?;
            cfg.spec.assoc_policy = AssocPolicy::LoadBalance(weights);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.hp.validate().map_err(ConfigError::Range)?;
        if self.values.is_empty() {
            return Err(ConfigError::Range("sweep values must be nonempty".into()));
        }
        if self.replications < 1 {
            return Err(ConfigError::Range("replications must be >= 1".into()));
        }
        if self.rounds < 1 {
            return Err(ConfigError::Range("rounds must be >= 1".into()));
        }
        if self.eval_slots < 1 {
            return Err(ConfigError::Range("evalSlots must be >= 1".into()));
        }
        if self.budget < 1 || self.joint_budget < 1 {
            return Err(ConfigError::Range("budgets must be >= 1".into()));
        }
        match self.sweep {
            SweepVar::UserDensity | SweepVar::MsbsDensity => {
                if self.values.iter().any(|&v| v <= 0.0) {
                    return Err(ConfigError::Range("densities must be positive".into()));
                }
            }
            SweepVar::LearningRate => {
                if self.values.iter().any(|&v| v <= 0.0) {
                    return Err(ConfigError::Range("learning rates must be positive".into()));
                }
            }
            SweepVar::SinrThreshold => {}
        }
        Ok(())
    }

    /// Scenario spec and hyperparameters with one sweep value applied.
    pub fn resolved_for(&self, value: f64) -> (ScenarioSpec, Hyperparams) {
        let mut spec = self.spec.clone();
        let mut hp = self.hp.clone();
        let area_km2 = spec.area.0 * spec.area.1 / 1e6;
        match self.sweep {
            SweepVar::SinrThreshold => spec.sinr_threshold_db = value,
            SweepVar::UserDensity => {
                spec.num_users = ((value * area_km2).round() as usize).max(1);
            }
            SweepVar::MsbsDensity => {
                spec.num_msbs = ((value * area_km2).round() as usize).max(1);
            }
            SweepVar::LearningRate => {
                hp.alpha = value;
                hp.lambda = value;
            }
        }
        (spec, hp)
    }

    /// Full key = value dump of the resolved configuration, defaults
    /// included, for run provenance. Parsing it back reproduces the config.
    pub fn resolved_text(&self) -> String {
        let mut out = String::new();
        let spec = &self.spec;
        let radio = &spec.radio;
        let hp = &self.hp;
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("string write");
        kv("scheme", self.scheme.to_string());
        kv("sweep", self.sweep.to_string());
        kv(
            "values",
            self.values
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("replications", self.replications.to_string());
        kv("rounds", self.rounds.to_string());
        kv("slotsPerRound", hp.tau.to_string());
        kv("evalSlots", self.eval_slots.to_string());
        kv("evalWarmup", self.eval_warmup.to_string());
        kv("seed", self.base_seed.to_string());
        kv("budget", self.budget.to_string());
        kv("jointBudget", self.joint_budget.to_string());
        kv("users", spec.num_users.to_string());
        kv("msbs", spec.num_msbs.to_string());
        kv("sectors", spec.sectors.to_string());
        kv("maxBeams", spec.max_beams.to_string());
        kv("maxAssoc", spec.max_assoc.to_string());
        kv("coverageRadius", spec.coverage_radius.to_string());
        kv("sinrThreshold", spec.sinr_threshold_db.to_string());
        kv("powerThreshold", spec.power_threshold_dbm.to_string());
        kv("areaWidth", spec.area.0.to_string());
        kv("areaHeight", spec.area.1.to_string());
        kv("slotSeconds", spec.slot_seconds.to_string());
        kv("userSpeed", spec.user_speed.to_string());
        kv(
            "mobility",
            match spec.mobility {
                MobilityModel::RandomWalk => "randomWalk",
                MobilityModel::RandomWaypoint => "randomWaypoint",
            }
            .into(),
        );
        kv(
            "placement",
            match spec.placement {
                Placement::Uniform => "uniform",
                Placement::Grid => "grid",
            }
            .into(),
        );
        kv(
            "interference",
            match spec.interference {
                InterferenceMode::SnrOnly => "snrOnly",
                InterferenceMode::Full => "full",
            }
            .into(),
        );
        kv(
            "shadowingMode",
            match spec.shadowing {
                ShadowingMode::PerEpisode => "perEpisode",
                ShadowingMode::PerSlot => "perSlot",
            }
            .into(),
        );
        match spec.assoc_policy {
            AssocPolicy::MaxPower => kv("associationPolicy", "maxPower".into()),
            AssocPolicy::LoadBalance(w) => {
                kv("associationPolicy", "loadBalance".into());
                kv("k1", w.k1().to_string());
                kv("k2", w.k2().to_string());
            }
        }
        kv("kappa", radio.kappa.to_string());
        kv("rho", radio.rho.to_string());
        kv("alpha", radio.alpha.to_string());
        kv("beta", radio.beta.to_string());
        kv("sigma2", radio.sigma2.to_string());
        kv("txGain", radio.g_tx.to_string());
        kv("rxGain", radio.g_rx.to_string());
        kv("mbsPower", radio.p_mbs.to_string());
        kv("sbsPower", radio.p_sbs.to_string());
        kv("mbsBandwidth", radio.w_mbs.to_string());
        kv("mmBandwidth", radio.w_mm.to_string());
        kv("mbsCarrier", radio.f_mbs.to_string());
        kv("mmCarrier", radio.f_mm.to_string());
        kv("noiseFigure", radio.noise_figure.to_string());
        kv("discount", hp.gamma.to_string());
        kv("learningRate", hp.alpha.to_string());
        kv("localLearningRate", hp.lambda.to_string());
        kv("epsilonStart", hp.epsilon_start.to_string());
        kv("epsilonMin", hp.epsilon_min.to_string());
        kv("epsilonDecay", hp.epsilon_decay.to_string());
        kv("targetInterval", hp.target_interval.to_string());
        kv("minibatch", hp.minibatch.to_string());
        kv("replayCapacity", hp.replay_capacity.to_string());
        kv(
            "rewardScale",
            match hp.reward_scale {
                None => "auto".into(),
                Some(s) => s.to_string(),
            },
        );
        kv("eta", hp.eta.to_string());
        kv(
            "dataWeighting",
            match hp.data_weighting {
                DataWeighting::Participants => "participants",
                DataWeighting::SlotsOnly => "slots",
            }
            .into(),
        );
        out
    }
}
