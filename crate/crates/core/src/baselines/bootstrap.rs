use std::sync::Arc;

use rand::Rng;

use super::greedy::{greedy_action, train};
use super::TrainConfig;
use crate::bandit::{ActionSet, Agent, HistoryBuffer};
use crate::error::{Error, Result};
use crate::tensor::{DenseNet, Optimizer};
use crate::{rng_from_seed, Rng as AgentRng};

/// Default ensemble size.
pub const DEFAULT_ENSEMBLE: usize = 5;

/// `len` indices drawn uniformly with replacement from `0..len`.
pub fn bootstrap_resample(len: usize, rng: &mut impl Rng) -> Vec<usize> {
    (0..len).map(|_| rng.random_range(0..len)).collect()
}

/// Picks one ensemble member uniformly and acts greedily under it.
/// Returns `(action, member)`.
pub fn bootstrapped_choose(
    nets: &[DenseNet],
    context: &[f64],
    actions: &ActionSet,
    rng: &mut impl Rng,
) -> Result<(usize, usize)> {
    if nets.is_empty() {
        return Err(Error::contract("bootstrapped ensemble is empty"));
    }
    let member = rng.random_range(0..nets.len());
    Ok((greedy_action(&nets[member], context, actions)?, member))
}

/// Trains every member on its own with-replacement resample of `history`.
pub fn bootstrapped_update(
    nets: &mut [DenseNet],
    optimizers: &mut [Optimizer],
    history: &HistoryBuffer,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<()> {
    if nets.len() != optimizers.len() {
        return Err(Error::shape(
            "one optimizer per ensemble member is required",
        ));
    }
    for (net, opt) in nets.iter_mut().zip(optimizers) {
        let resample = bootstrap_resample(history.len(), rng);
        train(net, history, &resample, cfg, opt, rng)?;
    }
    Ok(())
}

pub struct BootstrapAgent {
    name: String,
    nets: Vec<DenseNet>,
    optimizers: Vec<Optimizer>,
    cfg: TrainConfig,
    actions: Arc<ActionSet>,
    rng: AgentRng,
}

impl BootstrapAgent {
    pub fn new(
        name: impl Into<String>,
        context_dim: usize,
        actions: Arc<ActionSet>,
        ensemble: usize,
        cfg: TrainConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if ensemble == 0 {
            return Err(Error::contract("ensemble size must be ≥ 1"));
        }
        let mut rng = rng_from_seed(seed);
        let input = context_dim + actions.feature_dim();
        let nets = (0..ensemble)
            .map(|_| cfg.build(input, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let optimizers = (0..ensemble)
            .map(|_| Optimizer::new(cfg.optimizer, cfg.learning_rate))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            name: name.into(),
            nets,
            optimizers,
            cfg,
            actions,
            rng,
        })
    }

    pub fn nets(&self) -> &[DenseNet] {
        &self.nets
    }
}

impl Agent for BootstrapAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn choose(&mut self, context: &[f64]) -> Result<usize> {
        bootstrapped_choose(&self.nets, context, &self.actions, &mut self.rng).map(|(a, _)| a)
    }

    fn update(&mut self, history: &HistoryBuffer) -> Result<()> {
        bootstrapped_update(
            &mut self.nets,
            &mut self.optimizers,
            history,
            &self.cfg,
            &mut self.rng,
        )
    }
}
