//! Discrete-time simulator for beam management in an ultra-dense mmWave
//! heterogeneous network.
//!
//! A macro base station (MBS) on the microwave band overlays a dense layer of
//! mmWave small cells (mSBSs). Each mSBS steers a limited number of beams onto
//! angular sectors; users associate with up to a few mSBSs at once and fall
//! back to the MBS when uncovered. The crate provides:
//!
//! - link-budget primitives for both bands ([`channel`]),
//! - topology, mobility, rates and coverage metrics ([`network`]),
//! - the per-mSBS decision process driving all learners ([`mdp`]),
//! - a from-scratch double deep Q-network with manual backprop ([`deepq`]),
//! - federated training with data cleaning and weighted aggregation
//!   ([`federation`]),
//! - microwave-assisted multi-association ([`association`]),
//! - the BFS / EDB / BMDL / BMCL comparison schemes ([`baselines`]),
//! - a config-driven experiment harness with CSV output ([`config`],
//!   [`experiment`]).
//!
//! The `parallel` feature (on by default) runs brute-force policy enumeration
//! and experiment replications on a rayon pool; without it everything falls
//! back to sequential loops with identical results.

pub mod association;
pub mod baselines;
pub mod channel;
pub mod config;
pub mod deepq;
pub mod experiment;
pub mod federation;
pub mod mdp;
pub mod network;

pub use channel::{InterferenceMode, LinkBudget, RadioConstants};
pub use config::{ExperimentConfig, SweepVar};
pub use deepq::{Hyperparams, MlpSpec, ModelWeights};
pub use federation::{TrainingTrace, run_bmfl};
pub use network::{BeamPolicy, MsbsDesc, NetworkState, Point, Scenario, SectorSet};
