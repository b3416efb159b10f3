use std::sync::Arc;

use rand::Rng;

use super::{action_values, minibatch, mse_gradient, uniform_choose, TrainConfig};
use crate::bandit::{argmax, ActionSet, Agent, HistoryBuffer};
use crate::error::{Error, Result};
use crate::tensor::{DenseNet, Optimizer};
use crate::{rng_from_seed, Rng as AgentRng};

/// Default exploration rate.
pub const DEFAULT_EPSILON: f64 = 0.1;

/// Argmax of the net's predicted rewards; ties go to the lowest index.
pub fn greedy_action(net: &DenseNet, context: &[f64], actions: &ActionSet) -> Result<usize> {
    Ok(argmax(&action_values(net, context, actions)?))
}

/// ε-greedy: uniform with probability `epsilon`, greedy otherwise.
pub fn neural_greedy_choose(
    net: &DenseNet,
    context: &[f64],
    actions: &ActionSet,
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<usize> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::contract(format!(
            "epsilon must be in [0, 1], got {epsilon}"
        )));
    }
    if rng.random_bool(epsilon) {
        uniform_choose(actions.len(), rng)
    } else {
        greedy_action(net, context, actions)
    }
}

/// `steps` minibatch regression steps on history rows drawn from `pool`.
pub(crate) fn train(
    net: &mut DenseNet,
    history: &HistoryBuffer,
    pool: &[usize],
    cfg: &TrainConfig,
    opt: &mut Optimizer,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let mut losses = Vec::with_capacity(cfg.grad_steps);
    if pool.is_empty() {
        return Ok(losses);
    }
    for _ in 0..cfg.grad_steps {
        let rows = minibatch(pool, cfg.batch_size, rng);
        let (loss, tape) = mse_gradient(net, history, &rows, None)?;
        opt.step(net, &tape)?;
        losses.push(loss);
    }
    Ok(losses)
}

pub struct NeuralGreedyAgent {
    name: String,
    net: DenseNet,
    epsilon: f64,
    cfg: TrainConfig,
    optimizer: Optimizer,
    actions: Arc<ActionSet>,
    rng: AgentRng,
}

impl NeuralGreedyAgent {
    pub fn new(
        name: impl Into<String>,
        context_dim: usize,
        actions: Arc<ActionSet>,
        epsilon: f64,
        cfg: TrainConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::contract(format!(
                "epsilon must be in [0, 1], got {epsilon}"
            )));
        }
        let mut rng = rng_from_seed(seed);
        let net = cfg.build(context_dim + actions.feature_dim(), &mut rng)?;
        Ok(Self {
            name: name.into(),
            net,
            epsilon,
            optimizer: Optimizer::new(cfg.optimizer, cfg.learning_rate)?,
            cfg,
            actions,
            rng,
        })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }
}

impl Agent for NeuralGreedyAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn choose(&mut self, context: &[f64]) -> Result<usize> {
        neural_greedy_choose(
            &self.net,
            context,
            &self.actions,
            self.epsilon,
            &mut self.rng,
        )
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
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::test_support::{actions, frequencies, history, preference_net};
    use crate::tensor::Activation;

    #[test]
    fn full_exploration_matches_uniform() {
        let acts = actions(4);
        let net = preference_net(&[0.0, 0.0, 5.0, 0.0]);
        let mut a = rng_from_seed(3);
        let mut b = rng_from_seed(3);
        for _ in 0..200 {
            let greedy = neural_greedy_choose(&net, &[0.0, 0.0], &acts, 1.0, &mut a).unwrap();
            // random_bool(1.0) consumes no randomness, so the streams stay aligned.
            let uniform = uniform_choose(4, &mut b).unwrap();
            assert_eq!(greedy, uniform);
        }
    }

    #[test]
    fn zero_net_ties_to_first() {
        let acts = actions(3);
        let net = DenseNet::zeros(&[5, 4, 1], Activation::Relu).unwrap();
        assert_eq!(
            neural_greedy_choose(&net, &[0.3, 0.1], &acts, 0.0, &mut rng_from_seed(0)).unwrap(),
            0
        );
    }

    #[test]
    fn epsilon_mixture_frequency() {
        let acts = actions(4);
        let net = preference_net(&[0.0, 0.0, 5.0, 0.0]);
        let mut rng = rng_from_seed(4);
        let freq = frequencies(10_000, 4, || {
            neural_greedy_choose(&net, &[0.5, 0.5], &acts, 0.2, &mut rng).unwrap()
        });
        assert!((freq[2] - 0.85).abs() <= 0.02, "{freq:?}");
    }

    #[test]
    fn invalid_epsilon_rejected() {
        let acts = actions(2);
        let net = preference_net(&[0.0, 1.0]);
        assert!(
            neural_greedy_choose(&net, &[0.0, 0.0], &acts, 1.5, &mut rng_from_seed(0)).is_err()
        );
    }

    #[test]
    fn training_learns_dominant_action() {
        let acts = Arc::new(actions(3));
        let h = history(90, &acts, |a, _| if a == 1 { 0.9 } else { 0.1 });
        let cfg = TrainConfig {
            hidden: vec![16, 16],
            grad_steps: 300,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let mut agent = NeuralGreedyAgent::new("g", 2, acts, 0.0, cfg, 1).unwrap();
        agent.update(&h).unwrap();
        assert_eq!(agent.choose(&[0.2, 0.4]).unwrap(), 1);
    }
}
