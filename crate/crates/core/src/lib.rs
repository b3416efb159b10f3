//! Contextual-bandit simulation for treatment-allocation experiments.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense matrices, feed-forward nets with reverse-mode gradients,
//!   first-order optimizers and a symmetric eigensolver.
//! - [`ssge`]: the spectral Stein gradient estimator for scores of implicit
//!   distributions.
//! - [`fbnn`]: the functional-variational Thompson-sampling agent.
//! - [`baselines`]: Uniform, NeuralGreedy, Bayes-by-Backprop, Dropout,
//!   bootstrapped ensembles and parameter-noise agents.
//! - [`bandit`]: environments, the round loop, history and regret accounting.
//! - [`data`]: ingestion and preprocessing of drug-screen CSV exports.
//!
//! All randomness flows through explicitly seeded generators; given the same
//! seeds every trial is bit-for-bit reproducible.

pub mod bandit;
pub mod baselines;
pub mod data;
pub mod error;
pub mod fbnn;
pub mod ssge;
pub mod tensor;

pub use error::{Error, Result};

/// Generator used throughout the crate. ChaCha keeps streams stable across
/// platforms and crate versions.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate's generator from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
