//! Benchmark policies sharing the [`Agent`](crate::bandit::Agent) interface.
//!
//! Every neural baseline uses a plain [`DenseNet`] over the concatenated
//! context-action vector with the same hidden layout as the functional agent
//! (minus the noise input), trained by minibatch squared-error regression.

mod bbb;
mod bootstrap;
mod dropout;
mod greedy;
mod param_noise;
mod uniform;

pub use bbb::{bbb_update, mc_kl, BbbAgent, BbbConfig, BbbNet, GaussianPosterior, MixturePrior};
pub use bootstrap::{
    bootstrap_resample, bootstrapped_choose, bootstrapped_update, BootstrapAgent, DEFAULT_ENSEMBLE,
};
pub use dropout::{draw_dropout_masks, dropout_choose, DropoutAgent};
pub use greedy::{greedy_action, neural_greedy_choose, NeuralGreedyAgent, DEFAULT_EPSILON};
pub use param_noise::{adapt_noise, disagreement, parameter_noise_choose, ParameterNoiseAgent};
pub use param_noise::{DEFAULT_SIGMA, NOISE_GROWTH, NOISE_THRESHOLD};
pub use uniform::{uniform_choose, UniformAgent};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{ActionSet, HistoryBuffer};
use crate::error::{Error, Result};
use crate::tensor::{Activation, DenseNet, GradientTape, Matrix, OptimizerKind};

/// Training settings shared by the neural baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub grad_steps: usize,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            activation: Activation::Relu,
            optimizer: OptimizerKind::RmsProp,
            learning_rate: 1e-3,
            grad_steps: 100,
            batch_size: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grad_steps == 0 || self.batch_size == 0 {
            return Err(Error::contract("grad_steps and batch_size must be ≥ 1"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::contract("hidden widths must be ≥ 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::contract(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    /// Layer sizes for a net over `input` features with one output.
    pub fn sizes(&self, input: usize) -> Vec<usize> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(&self.hidden);
        sizes.push(1);
        sizes
    }

    pub fn build(&self, input: usize, rng: &mut impl Rng) -> Result<DenseNet> {
        DenseNet::new(&self.sizes(input), self.activation, rng)
    }
}

/// Predicted reward of every action for `context`.
pub fn action_values(net: &DenseNet, context: &[f64], actions: &ActionSet) -> Result<Vec<f64>> {
    Ok(net
        .forward(&actions.context_action_matrix(context))?
        .into_vec())
}

/// Draws `batch` indices uniformly with replacement from `pool`.
pub(crate) fn minibatch(pool: &[usize], batch: usize, rng: &mut impl Rng) -> Vec<usize> {
    (0..batch)
        .map(|_| pool[rng.random_range(0..pool.len())])
        .collect()
}

/// Mean-squared-error loss and its parameter gradient on `rows` of history,
/// optionally with hidden-unit masks.
pub(crate) fn mse_gradient(
    net: &DenseNet,
    history: &HistoryBuffer,
    rows: &[usize],
    masks: Option<&[Matrix]>,
) -> Result<(f64, GradientTape)> {
    let input = history.inputs(rows);
    let targets = history.rewards(rows);
    let trace = net.forward_trace(&input, masks)?;
    let n = rows.len() as f64;
    let mut grad = Matrix::zeros(rows.len(), 1);
    let mut loss = 0.0;
    for (i, y) in targets.iter().enumerate() {
        let err = trace.output().get(i, 0) - y;
        loss += err * err / n;
        grad.set(i, 0, 2.0 * err / n);
    }
    if !loss.is_finite() {
        return Err(Error::numeric("non-finite regression loss"));
    }
    Ok((loss, net.backward_trace(&trace, &grad)?))
}
