use std::sync::Arc;

use rand::Rng;

use super::greedy::{greedy_action, train};
use super::TrainConfig;
use crate::bandit::{ActionSet, Agent, HistoryBuffer};
use crate::error::{Error, Result};
use crate::tensor::{DenseNet, Optimizer};
use crate::{rng_from_seed, Rng as AgentRng};

/// Multiplicative step of the adaptive noise scale.
pub const NOISE_GROWTH: f64 = 1.01;
/// Disagreement rate below which the noise scale grows.
pub const NOISE_THRESHOLD: f64 = 0.1;
/// Initial noise scale.
pub const DEFAULT_SIGMA: f64 = 1e-2;

/// Greedy action under `θ + N(0, σ²I)`, one perturbation per call. The stored
/// parameters are left untouched.
pub fn parameter_noise_choose(
    net: &DenseNet,
    sigma: f64,
    context: &[f64],
    actions: &ActionSet,
    rng: &mut impl Rng,
) -> Result<usize> {
    if sigma == 0.0 {
        return greedy_action(net, context, actions);
    }
    greedy_action(&net.perturbed(sigma, rng)?, context, actions)
}

/// `σ · 1.01` if the policies agree closely (`distance < threshold`), else `σ / 1.01`.
pub fn adapt_noise(sigma: f64, distance: f64, threshold: f64) -> f64 {
    if distance < threshold {
        sigma * NOISE_GROWTH
    } else {
        sigma / NOISE_GROWTH
    }
}

/// Fraction of `contexts` on which the greedy actions of `a` and `b` differ.
pub fn disagreement(
    a: &DenseNet,
    b: &DenseNet,
    contexts: &[&[f64]],
    actions: &ActionSet,
) -> Result<f64> {
    if contexts.is_empty() {
        return Ok(0.0);
    }
    let mut differ = 0usize;
    for ctx in contexts {
        if greedy_action(a, ctx, actions)? != greedy_action(b, ctx, actions)? {
            differ += 1;
        }
    }
    Ok(differ as f64 / contexts.len() as f64)
}

pub struct ParameterNoiseAgent {
    name: String,
    net: DenseNet,
    sigma: f64,
    cfg: TrainConfig,
    optimizer: Optimizer,
    actions: Arc<ActionSet>,
    rng: AgentRng,
}

impl ParameterNoiseAgent {
    pub fn new(
        name: impl Into<String>,
        context_dim: usize,
        actions: Arc<ActionSet>,
        sigma: f64,
        cfg: TrainConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::contract(format!(
                "noise scale must be ≥ 0, got {sigma}"
            )));
        }
        let mut rng = rng_from_seed(seed);
        let net = cfg.build(context_dim + actions.feature_dim(), &mut rng)?;
        Ok(Self {
            name: name.into(),
            net,
            sigma,
            optimizer: Optimizer::new(cfg.optimizer, cfg.learning_rate)?,
            cfg,
            actions,
            rng,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }
}

impl Agent for ParameterNoiseAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn choose(&mut self, context: &[f64]) -> Result<usize> {
        parameter_noise_choose(&self.net, self.sigma, context, &self.actions, &mut self.rng)
    }

    fn update(&mut self, history: &HistoryBuffer) -> Result<()> {
        let pool: Vec<usize> = (0..history.len()).collect();
        train(
            &mut self.net,
            history,
            &pool,
            &self.cfg,
            &mut self.optimizer,
            &mut self.rng,
        )?;
        // Adapt σ on the most recent batch of contexts.
        let start = history.len().saturating_sub(self.cfg.batch_size);
        let recent: Vec<&[f64]> = history.entries()[start..]
            .iter()
            .map(|e| e.context.as_slice())
            .collect();
        let perturbed = self.net.perturbed(self.sigma, &mut self.rng)?;
        let distance = disagreement(&self.net, &perturbed, &recent, &self.actions)?;
        self.sigma = adapt_noise(self.sigma, distance, NOISE_THRESHOLD);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::test_support::{actions, frequencies, history};
    use crate::tensor::Activation;

    #[test]
    fn zero_sigma_is_greedy() {
        let acts = actions(4);
        let net = DenseNet::new(&[6, 8, 1], Activation::Relu, &mut rng_from_seed(0)).unwrap();
        let greedy = greedy_action(&net, &[0.2, 0.7], &acts).unwrap();
        let mut rng = rng_from_seed(1);
        for _ in 0..20 {
            assert_eq!(
                parameter_noise_choose(&net, 0.0, &[0.2, 0.7], &acts, &mut rng).unwrap(),
                greedy
            );
        }
    }

    #[test]
    fn huge_sigma_is_near_uniform() {
        let acts = actions(4);
        let net = DenseNet::new(&[6, 32, 32, 1], Activation::Relu, &mut rng_from_seed(2)).unwrap();
        let mut rng = rng_from_seed(3);
        let freq = frequencies(2000, 4, || {
            parameter_noise_choose(&net, 1e3, &[0.5, 0.5], &acts, &mut rng).unwrap()
        });
        for f in &freq {
            assert!((f - 0.25).abs() < 0.1, "{freq:?}");
        }
    }

    #[test]
    fn choosing_never_mutates_parameters() {
        let acts = actions(3);
        let net = DenseNet::new(&[5, 8, 1], Activation::Relu, &mut rng_from_seed(4)).unwrap();
        let before = net.clone();
        parameter_noise_choose(&net, 0.5, &[0.1, 0.1], &acts, &mut rng_from_seed(5)).unwrap();
        assert_eq!(before, net);
    }

    #[test]
    fn adaptation_rule() {
        assert!((adapt_noise(1.0, 0.0, NOISE_THRESHOLD) - 1.01).abs() < 1e-15);
        assert!((adapt_noise(1.0, 1.0, NOISE_THRESHOLD) - 1.0 / 1.01).abs() < 1e-15);
        let mut sigma = 0.37;
        for i in 0..1000 {
            sigma = adapt_noise(sigma, (i % 2) as f64, NOISE_THRESHOLD);
        }
        assert!((sigma - 0.37).abs() < 1e-12);
    }

    #[test]
    fn update_adapts_sigma() {
        let acts = Arc::new(actions(3));
        let h = history(30, &acts, |a, _| a as f64 / 3.0);
        let cfg = TrainConfig {
            hidden: vec![8, 8],
            grad_steps: 5,
            ..TrainConfig::default()
        };
        let mut agent = ParameterNoiseAgent::new("p", 2, acts, 0.1, cfg, 3).unwrap();
        agent.update(&h).unwrap();
        let s = agent.sigma();
        assert!(
            (s - 0.101).abs() < 1e-12 || (s - 0.1 / 1.01).abs() < 1e-12,
            "{s}"
        );
    }
}
