//! Reproducible Monte Carlo experiments and the `subpath` command line.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod runner;

pub use config::{ExperimentConfig, TableMode};
pub use experiments::{run, Experiment, Report};
pub use runner::{replica_rng, resolve_threads, Role, Runner};
