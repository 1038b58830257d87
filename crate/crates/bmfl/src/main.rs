//! Command-line experiment runner.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bmfl::baselines::SchemeId;
use bmfl::config::ExperimentConfig;
use bmfl::deepq::{Activation, MlpSpec, ModelWeights, backward, forward};
use bmfl::experiment::{self, read_metrics_csv};
use bmfl::federation::complexity_estimate;
use bmfl::network::Scenario;

#[derive(Parser)]
#[command(
    name = "bmfl",
    about = "Beam-management simulator for ultra-dense mmWave networks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config file (key = value lines); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scheme override: BMFL, BFS, EDB, BMDL, or BMCL.
    #[arg(long)]
    scheme: Option<SchemeId>,
    /// Base seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSVs.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run one replication of the configured scheme at each sweep value.
    Run(RunArgs),
    /// Run the full sweep grid with all replications.
    Sweep(RunArgs),
    /// Aggregate a metrics CSV into per-(scheme, value) statistics.
    Summarize {
        /// metrics.csv produced by `run` or `sweep`.
        #[arg(long)]
        input: PathBuf,
        /// Where to write summary.csv (printed to stdout as well).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify manual backprop against central finite differences.
    CheckGradients {
        #[arg(long, default_value_t = 20)]
        draws: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn load(args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)
            .with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(scheme) = args.scheme {
        cfg.scheme = scheme;
    }
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    Ok(cfg)
}

fn execute(mut cfg: ExperimentConfig, out: &PathBuf, single: bool) -> anyhow::Result<()> {
    if single {
        cfg.replications = 1;
    }
    let scenario = Scenario::build(&cfg.spec, cfg.base_seed)?;
    let slots = cfg.rounds * cfg.hp.tau as u64;
    if cfg.scheme.trains() {
        println!(
            "{}: {} rounds x {} slots = {} training slots per replication \
             (complexity estimate {})",
            cfg.scheme,
            cfg.rounds,
            cfg.hp.tau,
            slots,
            complexity_estimate(&scenario, cfg.rounds, cfg.hp.tau as u64)
        );
    }
    let rows = experiment::run_experiment(&cfg, out)?;
    println!(
        "{} rows -> {}",
        rows.len(),
        out.join("metrics.csv").display()
    );
    print!("{}", experiment::summary_table(&experiment::summarize(&rows)?));
    Ok(())
}

fn check_gradients(draws: usize, seed: u64) -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for draw in 0..draws {
        let in_dim = 4 + draw % 5;
        let spec = MlpSpec {
            layer_sizes: vec![in_dim, 8, 6, 1],
            activation: Activation::Relu,
        };
        let w = ModelWeights::init_uniform(spec, &mut rng);
        let x: Vec<f64> = (0..in_dim)
            .map(|_| rand::Rng::random_range(&mut rng, -1.5..1.5))
            .collect();
        let grad = backward(&w, &x, 1.0)?;
        let h = 1e-5;
        for i in 0..w.params.len() {
            let mut plus = w.clone();
            plus.params[i] += h;
            let mut minus = w.clone();
            minus.params[i] -= h;
            let numeric = (forward(&plus, &x)? - forward(&minus, &x)?) / (2.0 * h);
            let denom = numeric.abs().max(grad[i].abs()).max(1e-8);
            worst = worst.max((numeric - grad[i]).abs() / denom);
        }
    }
    println!("max relative error over {draws} draws: {worst:.3e}");
    anyhow::ensure!(worst < 1e-4, "gradient check failed: {worst:.3e} >= 1e-4");
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let cfg = load(&args)?;
            execute(cfg, &args.out, true)
        }
        Command::Sweep(args) => {
            let cfg = load(&args)?;
            execute(cfg, &args.out, false)
        }
        Command::Summarize { input, out } => {
            let text = std::fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let rows = read_metrics_csv(&text)?;
            let summary = experiment::summarize(&rows)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("summary.csv"), experiment::summary_csv(&summary))?;
            }
            print!("{}", experiment::summary_table(&summary));
            Ok(())
        }
        Command::CheckGradients { draws, seed } => check_gradients(draws, seed),
    }
}
