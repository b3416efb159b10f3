//! The contextual-bandit protocol: action sets, environments, the round loop,
//! the agent-visible history and regret accounting.

mod actions;
mod env;
mod history;
mod regret;
mod run;

pub use actions::{argmax, ActionSet};
pub use env::{
    make_synthetic_linear, make_synthetic_nonlinear, make_tabular_replay, synthetic_linear,
    synthetic_linear_weights, synthetic_nonlinear, Environment, EnvironmentKind, Round,
    SyntheticSpec, CALIBRATION_DRAWS, DEFAULT_POOL_SIZE, FINGERPRINT_DENSITY,
};
pub use history::{HistoryBuffer, HistoryEntry};
pub use regret::RegretTrace;
pub use run::{
    oracle_value, run_trial, Agent, Fnv, TrialOptions, TrialOutcome, DEFAULT_UPDATE_EVERY,
};
