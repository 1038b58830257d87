//! Experiment execution: sweep grid x replications, per-scheme dispatch,
//! greedy evaluation, and CSV emission.
//!
//! Every (sweep value, replication) job builds its scenario from
//! `base seed + replication index`, so different schemes and sweep values
//! see paired user geometries and trajectories. Training schemes run their
//! full round schedule and are then evaluated greedily for `eval_slots`
//! fresh slots; static schemes recompute their policy every evaluation slot.
//! Replications run in parallel when the `parallel` feature is enabled;
//! output ordering is independent of scheduling.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use thiserror::Error;

use crate::baselines::{self, BaselineError, SchemeId};
use crate::config::ExperimentConfig;
use crate::deepq::{DeepQError, ModelWeights};
use crate::federation::{self, FederationError, TrainedModels, TrainingTrace};
use crate::mdp::{self, MdpError};
use crate::network::{BeamPolicy, NetworkState, RngStream, Scenario, ScenarioError};

/// One measured experiment outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub scheme: SchemeId,
    pub sweep_value: f64,
    pub replication: usize,
    pub seed: u64,
    /// Mean user coverage over the evaluation slots.
    pub coverage: f64,
    /// Mean system throughput over the evaluation slots, bit/s.
    pub throughput_bps: f64,
    /// Mean training loss over the final round; absent for static schemes.
    pub mean_loss_final: Option<f64>,
    pub wall_time_ms: u64,
}

pub const METRICS_HEADER: &str =
    "scheme,sweepValue,replication,seed,coverageFraction,throughputBps,meanLossFinal,wallTimeMs";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Federation(#[from] FederationError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    DeepQ(#[from] DeepQError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
    #[error("no rows to summarize")]
    EmptyInput,
    #[error("bad metrics CSV at line {line}: {message}")]
    BadCsv { line: usize, message: String },
}

/// How the evaluation loop obtains each slot's beam policy.
enum PolicySource {
    Bfs { budget: u64 },
    Edb,
    PerAgent(Vec<ModelWeights>),
    Shared { model: ModelWeights, joint: bool },
}

impl PolicySource {
    fn next_policy(
        &self,
        state: &NetworkState,
        scenario: &Scenario,
    ) -> Result<BeamPolicy, ExperimentError> {
        match self {
            PolicySource::Bfs { budget } => {
                Ok(baselines::bfs_policy(state, scenario, *budget)?)
            }
            PolicySource::Edb => Ok(baselines::edb_policy(state, scenario)),
            PolicySource::PerAgent(models) => {
                Ok(federation::greedy_agent_policy(models, state, scenario)?)
            }
            PolicySource::Shared { model, joint } => {
                Ok(baselines::bmcl_greedy_policy(model, *joint, state, scenario)?)
            }
        }
    }
}

/// Greedy evaluation over fresh slots: rebuilt initial state, the dedicated
/// evaluation mobility stream, constraint checks on every slot. Warmup slots
/// run the same policy loop but are excluded from the averages, letting the
/// association state settle before measurement.
fn evaluate(
    source: &PolicySource,
    scenario: &Scenario,
    warmup_slots: usize,
    eval_slots: usize,
) -> Result<(f64, f64), ExperimentError> {
    let mut state = NetworkState::init(scenario);
    let mut mobility = scenario.rng(RngStream::MobilityEval);
    let mut coverage = 0.0;
    let mut throughput = 0.0;
    for slot in 0..warmup_slots + eval_slots {
        let policy = source.next_policy(&state, scenario)?;
        let out = mdp::step(&mut state, &policy, scenario, &mut mobility)?;
        if slot >= warmup_slots {
            coverage += out.coverage;
            throughput += out.reward_bps;
        }
    }
    let n = eval_slots as f64;
    Ok((coverage / n, throughput / n))
}

struct JobOutput {
    row: MetricsRow,
    trace_csv: Option<String>,
}

fn run_job(
    cfg: &ExperimentConfig,
    value: f64,
    replication: usize,
) -> Result<JobOutput, ExperimentError> {
    let (spec, hp) = cfg.resolved_for(value);
    let seed = cfg.base_seed + replication as u64;
    let scenario = Scenario::build(&spec, seed)?;
    let started = Instant::now();

    let trace: Option<TrainingTrace> = match cfg.scheme {
        SchemeId::Bmfl => Some(federation::run_bmfl(&scenario, &hp, cfg.rounds, hp.tau)?),
        SchemeId::Bmdl => Some(baselines::bmdl_trainer(&scenario, &hp, cfg.rounds, hp.tau)?),
        SchemeId::Bmcl => Some(baselines::bmcl_trainer(
            &scenario,
            &hp,
            cfg.rounds,
            hp.tau,
            cfg.joint_budget,
        )?),
        SchemeId::Bfs | SchemeId::Edb => None,
    };
    let source = match (&trace, cfg.scheme) {
        (Some(t), _) => match &t.models {
            TrainedModels::PerAgent(models) => PolicySource::PerAgent(models.clone()),
            TrainedModels::Shared { model, joint } => PolicySource::Shared {
                model: model.clone(),
                joint: *joint,
            },
        },
        (None, SchemeId::Bfs) => PolicySource::Bfs { budget: cfg.budget },
        (None, _) => PolicySource::Edb,
    };
    let (coverage, throughput_bps) =
        evaluate(&source, &scenario, cfg.eval_warmup, cfg.eval_slots)?;

    Ok(JobOutput {
        row: MetricsRow {
            scheme: cfg.scheme,
            sweep_value: value,
            replication,
            seed,
            coverage,
            throughput_bps,
            mean_loss_final: trace.as_ref().and_then(|t| t.mean_final_round_loss()),
            wall_time_ms: started.elapsed().as_millis() as u64,
        },
        trace_csv: (replication == 0)
            .then(|| trace.as_ref().map(|t| t.to_csv()))
            .flatten(),
    })
}

/// Run the full sweep grid and write `metrics.csv`, the resolved config,
/// and (for training schemes) one loss-trace CSV per sweep value. Rows
/// computed before a failure are still flushed.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<Vec<MetricsRow>, ExperimentError> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("resolved_config.txt"), cfg.resolved_text())?;

    let jobs: Vec<(f64, usize)> = cfg
        .values
        .iter()
        .flat_map(|&v| (0..cfg.replications).map(move |r| (v, r)))
        .collect();
    let outputs = map_jobs(cfg, &jobs);

    let mut rows = Vec::with_capacity(jobs.len());
    let mut failure = None;
    for ((value, _), result) in jobs.iter().zip(outputs) {
        match result {
            Ok(out) => {
                if let Some(csv) = out.trace_csv {
                    let name = format!("trace_{}_{}.csv", cfg.scheme, value);
                    std::fs::write(out_dir.join(name), csv)?;
                }
                rows.push(out.row);
            }
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    }
    std::fs::write(out_dir.join("metrics.csv"), metrics_csv(&rows))?;
    match failure {
        Some(e) => Err(e),
        None => Ok(rows),
    }
}

#[cfg(feature = "parallel")]
fn map_jobs(
    cfg: &ExperimentConfig,
    jobs: &[(f64, usize)],
) -> Vec<Result<JobOutput, ExperimentError>> {
    jobs.par_iter().map(|&(v, r)| run_job(cfg, v, r)).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_jobs(
    cfg: &ExperimentConfig,
    jobs: &[(f64, usize)],
) -> Vec<Result<JobOutput, ExperimentError>> {
    jobs.iter().map(|&(v, r)| run_job(cfg, v, r)).collect()
}

fn format_loss(loss: Option<f64>) -> String {
    match loss {
        Some(l) => format!("{l:.9e}"),
        None => String::new(),
    }
}

/// Fixed-order CSV for metrics rows (UTF-8, comma-delimited, LF endings).
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:.6},{:.3},{},{}",
            r.scheme,
            r.sweep_value,
            r.replication,
            r.seed,
            r.coverage,
            r.throughput_bps,
            format_loss(r.mean_loss_final),
            r.wall_time_ms
        )
        .expect("string write");
    }
    out
}

/// Parse a metrics CSV produced by [`metrics_csv`].
pub fn read_metrics_csv(text: &str) -> Result<Vec<MetricsRow>, ExperimentError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == METRICS_HEADER => {}
        _ => {
            return Err(ExperimentError::BadCsv {
                line: 1,
                message: "missing or unexpected header".into(),
            });
        }
    }
    let mut rows = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 8 {
            return Err(ExperimentError::BadCsv {
                line,
                message: format!("expected 8 fields, got {}", fields.len()),
            });
        }
        let bad = |message: String| ExperimentError::BadCsv { line, message };
        rows.push(MetricsRow {
            scheme: fields[0].parse().map_err(bad)?,
            sweep_value: fields[1].parse().map_err(|e| bad(format!("sweepValue: {e}")))?,
            replication: fields[2]
                .parse()
                .map_err(|e| bad(format!("replication: {e}")))?,
            seed: fields[3].parse().map_err(|e| bad(format!("seed: {e}")))?,
            coverage: fields[4].parse().map_err(|e| bad(format!("coverage: {e}")))?,
            throughput_bps: fields[5]
                .parse()
                .map_err(|e| bad(format!("throughput: {e}")))?,
            mean_loss_final: if fields[6].is_empty() {
                None
            } else {
                Some(fields[6].parse().map_err(|e| bad(format!("loss: {e}")))?)
            },
            wall_time_ms: fields[7]
                .parse()
                .map_err(|e| bad(format!("wallTime: {e}")))?,
        });
    }
    Ok(rows)
}

/// Mean and sample standard deviation per (scheme, sweep value) group.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scheme: SchemeId,
    pub sweep_value: f64,
    pub n: usize,
    pub coverage_mean: f64,
    pub coverage_sd: f64,
    pub throughput_mean: f64,
    pub throughput_sd: f64,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Group rows by (scheme, sweep value), preserving first-appearance order.
pub fn summarize(rows: &[MetricsRow]) -> Result<Vec<SummaryRow>, ExperimentError> {
    if rows.is_empty() {
        return Err(ExperimentError::EmptyInput);
    }
    let mut groups: Vec<((SchemeId, u64), Vec<&MetricsRow>)> = Vec::new();
    for row in rows {
        let key = (row.scheme, row.sweep_value.to_bits());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(row),
            None => groups.push((key, vec![row])),
        }
    }
    Ok(groups
        .into_iter()
        .map(|(_, members)| {
            let coverage: Vec<f64> = members.iter().map(|r| r.coverage).collect();
            let throughput: Vec<f64> = members.iter().map(|r| r.throughput_bps).collect();
            let (coverage_mean, coverage_sd) = mean_sd(&coverage);
            let (throughput_mean, throughput_sd) = mean_sd(&throughput);
            SummaryRow {
                scheme: members[0].scheme,
                sweep_value: members[0].sweep_value,
                n: members.len(),
                coverage_mean,
                coverage_sd,
                throughput_mean,
                throughput_sd,
            }
        })
        .collect())
}

pub const SUMMARY_HEADER: &str =
    "scheme,sweepValue,n,coverageMean,coverageSd,throughputMean,throughputSd";

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.3},{:.3}",
            r.scheme, r.sweep_value, r.n, r.coverage_mean, r.coverage_sd, r.throughput_mean,
            r.throughput_sd
        )
        .expect("string write");
    }
    out
}

/// Aligned text rendering of a summary, throughput in Mbit/s.
pub fn summary_table(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<6} {:>12} {:>4} {:>20} {:>24}",
        "scheme", "sweepValue", "n", "coverage", "throughput [Mbit/s]"
    )
    .expect("string write");
    for r in rows {
        writeln!(
            out,
            "{:<6} {:>12} {:>4} {:>9.4} +/- {:>6.4} {:>13.2} +/- {:>6.2}",
            r.scheme.to_string(),
            r.sweep_value,
            r.n,
            r.coverage_mean,
            r.coverage_sd,
            r.throughput_mean / 1e6,
            r.throughput_sd / 1e6
        )
        .expect("string write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Placement;

    fn tiny_config(scheme: SchemeId) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.scheme = scheme;
        cfg.spec.num_users = 4;
        cfg.spec.num_msbs = 2;
        cfg.spec.sectors = 4;
        cfg.spec.max_beams = 1;
        cfg.spec.placement = Placement::Grid;
        cfg.hp.minibatch = 4;
        cfg.values = vec![-20.0];
        cfg.replications = 2;
        cfg.rounds = 2;
        cfg.hp.tau = 3;
        cfg.eval_slots = 3;
        cfg
    }

    #[test]
    fn run_writes_metrics_config_and_trace() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(SchemeId::Bmfl);
        let rows = run_experiment(&cfg, dir.path()).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.coverage >= 0.0 && r.coverage <= 1.0));
        assert!(rows.iter().all(|r| r.throughput_bps >= 0.0));
        assert!(rows.iter().all(|r| r.mean_loss_final.is_some()));
        assert!(dir.path().join("metrics.csv").exists());
        assert!(dir.path().join("resolved_config.txt").exists());
        assert!(dir.path().join("trace_BMFL_-20.csv").exists());
        // resolved config parses back to the same configuration
        let text = std::fs::read_to_string(dir.path().join("resolved_config.txt")).unwrap();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn static_schemes_have_no_loss_or_trace() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(SchemeId::Edb);
        let rows = run_experiment(&cfg, dir.path()).unwrap();
        assert!(rows.iter().all(|r| r.mean_loss_final.is_none()));
        assert!(!dir.path().join("trace_EDB_-20.csv").exists());
    }

    #[test]
    fn metrics_csv_roundtrips_and_pins_layout() {
        let rows = vec![
            MetricsRow {
                scheme: SchemeId::Bfs,
                sweep_value: -20.0,
                replication: 0,
                seed: 1,
                coverage: 0.5,
                throughput_bps: 1.23456789e9,
                mean_loss_final: None,
                wall_time_ms: 17,
            },
            MetricsRow {
                scheme: SchemeId::Bmfl,
                sweep_value: 0.1,
                replication: 3,
                seed: 4,
                coverage: 1.0 / 3.0,
                throughput_bps: 2.5e8,
                mean_loss_final: Some(0.0625),
                wall_time_ms: 90,
            },
        ];
        let csv = metrics_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), METRICS_HEADER);
        assert_eq!(lines.next().unwrap(), "BFS,-20,0,1,0.500000,1234567890.000,,17");
        assert_eq!(
            lines.next().unwrap(),
            "BMFL,0.1,3,4,0.333333,250000000.000,6.250000000e-2,90"
        );
        let back = read_metrics_csv(&csv).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].scheme, SchemeId::Bfs);
        assert_eq!(back[1].mean_loss_final, Some(0.0625));
    }

    #[test]
    fn read_rejects_malformed_csv() {
        assert!(matches!(
            read_metrics_csv("nope\n"),
            Err(ExperimentError::BadCsv { line: 1, .. })
        ));
        let bad = format!("{METRICS_HEADER}\nBFS,-20,0\n");
        assert!(matches!(
            read_metrics_csv(&bad),
            Err(ExperimentError::BadCsv { line: 2, .. })
        ));
    }

    #[test]
    fn summarize_hand_statistics() {
        let row = |value: f64, throughput: f64| MetricsRow {
            scheme: SchemeId::Edb,
            sweep_value: value,
            replication: 0,
            seed: 1,
            coverage: 0.25,
            throughput_bps: throughput,
            mean_loss_final: None,
            wall_time_ms: 0,
        };
        // single row: mean = value, sd = 0
        let s = summarize(&[row(1.0, 42.0)]).unwrap();
        assert_eq!(s[0].throughput_mean, 42.0);
        assert_eq!(s[0].throughput_sd, 0.0);
        // rows 10 and 20: mean 15, sample sd sqrt(50)
        let s = summarize(&[row(1.0, 10.0), row(1.0, 20.0)]).unwrap();
        assert_eq!(s[0].n, 2);
        assert!((s[0].throughput_mean - 15.0).abs() < 1e-12);
        assert!((s[0].throughput_sd - 50f64.sqrt()).abs() < 1e-12);
        // groups preserved per (scheme, value)
        let s = summarize(&[row(1.0, 1.0), row(2.0, 2.0), row(1.0, 3.0)]).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].n, 2);
        assert_eq!(s[1].n, 1);
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn repeat_runs_are_byte_identical_modulo_wall_time() {
        let cfg = tiny_config(SchemeId::Bmfl);
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        run_experiment(&cfg, dir_a.path()).unwrap();
        run_experiment(&cfg, dir_b.path()).unwrap();
        let read = |d: &std::path::Path, f: &str| std::fs::read_to_string(d.join(f)).unwrap();
        let strip = |text: String| -> String {
            text.lines()
                .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap())
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(
            strip(read(dir_a.path(), "metrics.csv")),
            strip(read(dir_b.path(), "metrics.csv"))
        );
        assert_eq!(
            read(dir_a.path(), "trace_BMFL_-20.csv"),
            read(dir_b.path(), "trace_BMFL_-20.csv")
        );
    }
}
