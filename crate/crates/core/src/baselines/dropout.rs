use std::sync::Arc;

use rand::Rng;

use super::{minibatch, mse_gradient, TrainConfig};
use crate::bandit::{argmax, ActionSet, Agent, HistoryBuffer};
use crate::error::{Error, Result};
use crate::tensor::{DenseNet, Matrix, Optimizer};
use crate::{rng_from_seed, Rng as AgentRng};

fn check_rate(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::contract(format!(
            "dropout rate must be in [0, 1), got {p}"
        )));
    }
    Ok(())
}

/// Inverted-dropout masks for `rows` rows; every row gets its own draw.
/// Kept units carry weight `1 / (1 - p)`.
pub fn draw_dropout_masks(
    net: &DenseNet,
    rows: usize,
    p: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Matrix>> {
    check_rate(p)?;
    let keep = 1.0 / (1.0 - p);
    Ok(net
        .hidden_sizes()
        .iter()
        .map(|&h| Matrix::from_fn(rows, h, |_, _| if rng.random_bool(p) { 0.0 } else { keep }))
        .collect())
}

/// One dropout mask, shared by every action's evaluation, then argmax.
pub fn dropout_choose(
    net: &DenseNet,
    context: &[f64],
    actions: &ActionSet,
    p: f64,
    rng: &mut impl Rng,
) -> Result<usize> {
    let single = draw_dropout_masks(net, 1, p, rng)?;
    let k = actions.len();
    let masks: Vec<Matrix> = single
        .iter()
        .map(|m| Matrix::from_fn(k, m.cols(), |_, c| m.get(0, c)))
        .collect();
    let values = net.forward_masked(&actions.context_action_matrix(context), &masks)?;
    Ok(argmax(values.data()))
}

pub struct DropoutAgent {
    name: String,
    net: DenseNet,
    rate: f64,
    cfg: TrainConfig,
    optimizer: Optimizer,
    actions: Arc<ActionSet>,
    rng: AgentRng,
}

impl DropoutAgent {
    pub fn new(
        name: impl Into<String>,
        context_dim: usize,
        actions: Arc<ActionSet>,
        rate: f64,
        cfg: TrainConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        check_rate(rate)?;
        let mut rng = rng_from_seed(seed);
        let net = cfg.build(context_dim + actions.feature_dim(), &mut rng)?;
        Ok(Self {
            name: name.into(),
            net,
            rate,
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

impl Agent for DropoutAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn choose(&mut self, context: &[f64]) -> Result<usize> {
        dropout_choose(&self.net, context, &self.actions, self.rate, &mut self.rng)
    }

    fn update(&mut self, history: &HistoryBuffer) -> Result<()> {
        let pool: Vec<usize> = (0..history.len()).collect();
        for _ in 0..self.cfg.grad_steps {
            let rows = minibatch(&pool, self.cfg.batch_size, &mut self.rng);
            let masks = draw_dropout_masks(&self.net, rows.len(), self.rate, &mut self.rng)?;
            let (_, tape) = mse_gradient(&self.net, history, &rows, Some(&masks))?;
            self.optimizer.step(&mut self.net, &tape)?;
        }
        Ok(())
    }
}
