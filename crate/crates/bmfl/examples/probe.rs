// Scratch diagnostics for calibrating the acceptance scenarios. Not part of
// the shipped surface; run with `cargo run --release --example probe`.

use bmfl::baselines::{bfs_policy, edb_policy};
use bmfl::deepq::Hyperparams;
use bmfl::federation::{TrainedModels, greedy_agent_policy, run_bmfl};
use bmfl::mdp::{evaluate_policy, step};
use bmfl::network::{NetworkState, Placement, RngStream, Scenario, ScenarioSpec};

fn main() {
    let mut spec = ScenarioSpec::default();
    spec.num_msbs = 6;
    spec.sectors = 4;
    spec.max_beams = 2;
    spec.placement = Placement::Uniform;
    let hp = Hyperparams {
        epsilon_decay: 0.98,
        ..Hyperparams::default()
    };
    let rounds = 30;

    let mut sums = [0.0f64; 5]; // bfs, static_bfs, edb, bmfl, bmdl
    for seed in 1..=10u64 {
        let scenario = Scenario::build(&spec, seed).unwrap();
        let trace = run_bmfl(&scenario, &hp, rounds, hp.tau).unwrap();
        let TrainedModels::PerAgent(models) = &trace.models else { unreachable!() };
        let bmdl = bmfl::baselines::bmdl_trainer(&scenario, &hp, rounds, hp.tau).unwrap();
        let TrainedModels::PerAgent(bmdl_models) = &bmdl.models else { unreachable!() };

        let mut state = NetworkState::init(&scenario);
        let mut rng = scenario.rng(RngStream::MobilityEval);
        let static_bfs = bfs_policy(&state, &scenario, 1_000_000).unwrap();
        let mut totals = [0.0f64; 5];
        for slot in 0..10 {
            let p_bfs = bfs_policy(&state, &scenario, 1_000_000).unwrap();
            let p_edb = edb_policy(&state, &scenario);
            let p_bmfl = greedy_agent_policy(models, &state, &scenario).unwrap();
            let p_bmdl = greedy_agent_policy(bmdl_models, &state, &scenario).unwrap();
            let r = |p| evaluate_policy(&state, p, &scenario) / 1e9;
            totals[0] += r(&p_bfs);
            totals[1] += r(&static_bfs);
            totals[2] += r(&p_edb);
            totals[3] += r(&p_bmfl);
            totals[4] += r(&p_bmdl);
            if seed == 1 {
                println!(
                    "slot {slot}: bfs {:?} bmfl {:?}",
                    (0..6).map(|b| p_bfs.sectors(b).iter().collect::<Vec<_>>()).collect::<Vec<_>>(),
                    (0..6).map(|b| p_bmfl.sectors(b).iter().collect::<Vec<_>>()).collect::<Vec<_>>(),
                );
            }
            // advance with the BFS policy so every scheme sees the same states
            step(&mut state, &p_bfs, &scenario, &mut rng).unwrap();
        }
        println!(
            "seed {seed}: bfs {:.1} static {:.1} edb {:.1} bmfl {:.1} bmdl {:.1}",
            totals[0], totals[1], totals[2], totals[3], totals[4]
        );
        for i in 0..5 {
            sums[i] += totals[i];
        }
    }
    println!(
        "MEAN: bfs {:.1} static_bfs {:.1} edb {:.1} bmfl {:.1} bmdl {:.1}",
        sums[0] / 10.0,
        sums[1] / 10.0,
        sums[2] / 10.0,
        sums[3] / 10.0,
        sums[4] / 10.0
    );
}
