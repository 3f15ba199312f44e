//! Agent-based simulation of opinion dynamics in interacting communities.
//!
//! Agents are arranged in social groups joined by a block-structured,
//! doubly-stochastic interaction matrix ([`graphgen`]). Each pairwise
//! interaction moves both opinions along the derivative of an interaction
//! potential ([`potentials`]) and adds adaptive individualization noise
//! ([`noise`]). The [`engine`] runs the dynamics, [`analysis`] extracts
//! clusters and collapse events, and [`experiments`] drives seeded Monte
//! Carlo sweeps.

pub mod analysis;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod graphgen;
pub mod noise;
pub mod potentials;
pub mod rng;

pub use analysis::{detect_clusters, summarize, ClusterSet, RunSummary};
pub use engine::{run, OpinionState, RunOutput, SimConfig, Simulation, Trajectory};
pub use error::{Result, SimError};
pub use experiments::{AdjacencySpec, Param, Scenario, SweepSpec};
pub use graphgen::{Adjacency, BlockLayout};
pub use noise::{NoiseMode, NoiseSpec};
pub use potentials::{PotentialKind, PotentialSpec};
