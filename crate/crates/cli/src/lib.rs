//! Experiment driver for the `fpbandit` library: TOML-configured runs over
//! several agents and trials, hyperparameter grid sweeps, CSV traces and
//! aggregate reports.
//!
//! Every agent in a run sees the identical environment stream for a given
//! trial index; agent randomness is derived separately from the agent name,
//! so adding or removing an agent never changes another agent's results.

pub mod agents;
pub mod config;
pub mod error;
pub mod experiment;
pub mod report;
pub mod seeds;

pub use agents::{build_agent, AgentKind, AgentSpec, GridPoint};
pub use config::{EnvironmentSpec, ExperimentConfig};
pub use error::{CliError, Result};
pub use experiment::{
    grid_sweep, run_experiment, ExperimentOutcome, Manifest, RunOptions, SummaryRow,
};
pub use report::report;
