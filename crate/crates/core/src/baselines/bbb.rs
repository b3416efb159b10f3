use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::greedy::greedy_action;
use super::{minibatch, TrainConfig};
use crate::bandit::{ActionSet, Agent, HistoryBuffer};
use crate::error::{Error, Result};
use crate::tensor::{DenseNet, Matrix, Optimizer};
use crate::{rng_from_seed, Rng as AgentRng};

/// Scale-mixture prior `π N(m, σ₁²) + (1 − π) N(m, σ₂²)`, applied per weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixturePrior {
    pub mean: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub pi: f64,
}

impl Default for MixturePrior {
    fn default() -> Self {
        Self {
            mean: 0.0,
            sigma1: 1.0,
            sigma2: (-6.0f64).exp(),
            pi: 0.5,
        }
    }
}

fn log_normal(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * PI).ln()
}

impl MixturePrior {
    /// Single Gaussian `N(mean, sigma²)`.
    pub fn gaussian(mean: f64, sigma: f64) -> Self {
        Self {
            mean,
            sigma1: sigma,
            sigma2: sigma,
            pi: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma1 > 0.0 && self.sigma2 > 0.0) {
            return Err(Error::contract("prior standard deviations must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.pi) {
            return Err(Error::contract(format!(
                "mixture weight must be in [0, 1], got {}",
                self.pi
            )));
        }
        if !self.mean.is_finite() {
            return Err(Error::contract("prior mean must be finite"));
        }
        Ok(())
    }

    /// Log-weights of the two components at `w` (−∞ for an absent component).
    fn component_logs(&self, w: f64) -> [f64; 2] {
        let l1 = if self.pi > 0.0 {
            self.pi.ln() + log_normal(w, self.mean, self.sigma1)
        } else {
            f64::NEG_INFINITY
        };
        let l2 = if self.pi < 1.0 {
            (1.0 - self.pi).ln() + log_normal(w, self.mean, self.sigma2)
        } else {
            f64::NEG_INFINITY
        };
        [l1, l2]
    }

    pub fn log_density(&self, w: f64) -> f64 {
        let [l1, l2] = self.component_logs(w);
        let m = l1.max(l2);
        m + ((l1 - m).exp() + (l2 - m).exp()).ln()
    }

    /// `d/dw log p(w)`.
    pub fn grad_log_density(&self, w: f64) -> f64 {
        let [l1, l2] = self.component_logs(w);
        let m = l1.max(l2);
        let (e1, e2) = ((l1 - m).exp(), (l2 - m).exp());
        let (r1, r2) = (e1 / (e1 + e2), e2 / (e1 + e2));
        let d = w - self.mean;
        -(r1 * d / (self.sigma1 * self.sigma1) + r2 * d / (self.sigma2 * self.sigma2))
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Inverse of softplus, for initialising `ρ` from a target standard deviation.
fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// Factorised Gaussian `q(w) = Π N(μᵢ, softplus(ρᵢ)²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
}

impl GaussianPosterior {
    pub fn new(mu: Vec<f64>, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::contract(format!(
                "posterior sigma must be > 0, got {sigma}"
            )));
        }
        let rho = vec![softplus_inverse(sigma); mu.len()];
        Ok(Self { mu, rho })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn sigma(&self, i: usize) -> f64 {
        softplus(self.rho[i])
    }

    /// Reparameterised draw: returns `(w, ε)` with `w = μ + σ ε`.
    pub fn sample(&self, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
        let eps: Vec<f64> = (0..self.len())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let w = (0..self.len())
            .map(|i| self.mu[i] + self.sigma(i) * eps[i])
            .collect();
        (w, eps)
    }

    pub fn log_density(&self, w: &[f64]) -> f64 {
        w.iter()
            .enumerate()
            .map(|(i, &x)| log_normal(x, self.mu[i], self.sigma(i)))
            .sum()
    }
}

/// Monte Carlo estimate of `KL[q ‖ p]` from `draws` samples of `q`.
pub fn mc_kl(
    posterior: &GaussianPosterior,
    prior: &MixturePrior,
    draws: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    if draws == 0 {
        return Err(Error::contract("KL estimate needs at least one draw"));
    }
    prior.validate()?;
    let mut total = 0.0;
    for _ in 0..draws {
        let (w, _) = posterior.sample(rng);
        let log_p: f64 = w.iter().map(|&x| prior.log_density(x)).sum();
        total += posterior.log_density(&w) - log_p;
    }
    Ok(total / draws as f64)
}

/// A dense net with a factorised Gaussian over its flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BbbNet {
    template: DenseNet,
    posterior: GaussianPosterior,
    prior: MixturePrior,
}

impl BbbNet {
    /// Means taken from `template`'s parameters, every σ set to `init_sigma`.
    pub fn new(template: DenseNet, prior: MixturePrior, init_sigma: f64) -> Result<Self> {
        prior.validate()?;
        let posterior = GaussianPosterior::new(template.params(), init_sigma)?;
        Ok(Self {
            template,
            posterior,
            prior,
        })
    }

    pub fn posterior(&self) -> &GaussianPosterior {
        &self.posterior
    }

    pub fn prior(&self) -> &MixturePrior {
        &self.prior
    }

    /// Net with weights `w = μ + σ ε`; also returns `ε`.
    pub fn sample_net(&self, rng: &mut impl Rng) -> Result<(DenseNet, Vec<f64>)> {
        let (w, eps) = self.posterior.sample(rng);
        let mut net = self.template.clone();
        net.set_params(&w)?;
        Ok((net, eps))
    }

    /// Net at the posterior mean.
    pub fn mean_net(&self) -> Result<DenseNet> {
        let mut net = self.template.clone();
        net.set_params(&self.posterior.mu)?;
        Ok(net)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BbbConfig {
    pub prior: MixturePrior,
    pub init_sigma: f64,
    pub likelihood_variance: f64,
    /// Multiplier on the `(1/|D|)·KL` term; 0 gives pure likelihood training.
    pub kl_weight: f64,
}

impl Default for BbbConfig {
    fn default() -> Self {
        Self {
            prior: MixturePrior::default(),
            init_sigma: 0.01,
            likelihood_variance: 0.01,
            kl_weight: 1.0,
        }
    }
}

/// One reparameterised gradient step on `rows` of `history`. Returns the
/// minibatch negative log-likelihood (up to a constant).
pub fn bbb_update(
    net: &mut BbbNet,
    history: &HistoryBuffer,
    rows: &[usize],
    cfg: &BbbConfig,
    opt: &mut Optimizer,
    rng: &mut impl Rng,
) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::contract("BBB update needs a non-empty batch"));
    }
    let (sampled, eps) = net.sample_net(rng)?;
    let input = history.inputs(rows);
    let targets = history.rewards(rows);
    let trace = sampled.forward_trace(&input, None)?;
    let b = rows.len() as f64;
    let var = cfg.likelihood_variance;
    let mut grad = Matrix::zeros(rows.len(), 1);
    let mut nll = 0.0;
    for (i, y) in targets.iter().enumerate() {
        let err = trace.output().get(i, 0) - y;
        nll += err * err / (2.0 * var * b);
        grad.set(i, 0, err / (var * b));
    }
    if !nll.is_finite() {
        return Err(Error::numeric("non-finite BBB likelihood"));
    }
    let g_w = sampled.backward_trace(&trace, &grad)?;

    let c = cfg.kl_weight / history.len() as f64;
    let p = net.posterior.len();
    let w = sampled.params();
    let mut full = vec![0.0; 2 * p];
    for i in 0..p {
        let sigma = net.posterior.sigma(i);
        let glp = net.prior.grad_log_density(w[i]);
        let gw = g_w.as_slice()[i];
        full[i] = gw - c * glp;
        let g_sigma = gw * eps[i] + c * (-1.0 / sigma - glp * eps[i]);
        full[p + i] = g_sigma * sigmoid(net.posterior.rho[i]);
    }
    let mut params: Vec<f64> = net
        .posterior
        .mu
        .iter()
        .chain(&net.posterior.rho)
        .copied()
        .collect();
    opt.step_slice(&mut params, &full)?;
    net.posterior.rho = params.split_off(p);
    net.posterior.mu = params;
    Ok(nll)
}

pub struct BbbAgent {
    name: String,
    net: BbbNet,
    bbb: BbbConfig,
    train: TrainConfig,
    optimizer: Optimizer,
    actions: Arc<ActionSet>,
    rng: AgentRng,
}

impl BbbAgent {
    pub fn new(
        name: impl Into<String>,
        context_dim: usize,
        actions: Arc<ActionSet>,
        bbb: BbbConfig,
        train: TrainConfig,
        seed: u64,
    ) -> Result<Self> {
        train.validate()?;
        if !(bbb.likelihood_variance > 0.0 && bbb.kl_weight >= 0.0) {
            return Err(Error::contract(
                "BBB needs a positive likelihood variance and a non-negative KL weight",
            ));
        }
        let mut rng = rng_from_seed(seed);
        let template = train.build(context_dim + actions.feature_dim(), &mut rng)?;
        Ok(Self {
            name: name.into(),
            net: BbbNet::new(template, bbb.prior, bbb.init_sigma)?,
            optimizer: Optimizer::new(train.optimizer, train.learning_rate)?,
            bbb,
            train,
            actions,
            rng,
        })
    }

    pub fn net(&self) -> &BbbNet {
        &self.net
    }
}

impl Agent for BbbAgent {
    fn name(&self) -> &str {
        &self.name
    }

    /// One weight draw per round, greedy under it.
    fn choose(&mut self, context: &[f64]) -> Result<usize> {
        let (net, _) = self.net.sample_net(&mut self.rng)?;
        greedy_action(&net, context, &self.actions)
    }

    fn update(&mut self, history: &HistoryBuffer) -> Result<()> {
        let pool: Vec<usize> = (0..history.len()).collect();
        for _ in 0..self.train.grad_steps {
            let rows = minibatch(&pool, self.train.batch_size, &mut self.rng);
            bbb_update(
                &mut self.net,
                history,
                &rows,
                &self.bbb,
                &mut self.optimizer,
                &mut self.rng,
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::test_support::{actions, history};
    use crate::tensor::Activation;

    #[test]
    fn matched_prior_has_zero_kl() {
        let q = GaussianPosterior::new(vec![0.0; 3], 1.0).unwrap();
        let kl = mc_kl(
            &q,
            &MixturePrior::gaussian(0.0, 1.0),
            10_000,
            &mut rng_from_seed(1),
        )
        .unwrap();
        assert!(kl.abs() < 0.05, "{kl}");
    }

    #[test]
    fn shifted_gaussian_kl_is_one_half() {
        let q = GaussianPosterior::new(vec![0.0], 1.0).unwrap();
        let kl = mc_kl(
            &q,
            &MixturePrior::gaussian(1.0, 1.0),
            10_000,
            &mut rng_from_seed(2),
        )
        .unwrap();
        assert!((kl - 0.5).abs() < 0.05, "{kl}");
    }

    #[test]
    fn kl_is_nonnegative_in_expectation() {
        let mut rng = rng_from_seed(3);
        for dim in [1, 4, 16] {
            let mu: Vec<f64> = (0..dim).map(|i| 0.1 * i as f64).collect();
            let q = GaussianPosterior::new(mu, 0.3).unwrap();
            let kl = mc_kl(&q, &MixturePrior::default(), 10_000, &mut rng).unwrap();
            assert!(kl > -0.05, "dim {dim}: {kl}");
        }
    }

    #[test]
    fn mixture_gradient_matches_finite_difference() {
        let prior = MixturePrior::default();
        for &w in &[-0.5, -0.01, 0.0005, 0.2, 1.3] {
            let h = 1e-7;
            let fd = (prior.log_density(w + h) - prior.log_density(w - h)) / (2.0 * h);
            let g = prior.grad_log_density(w);
            assert!(
                (fd - g).abs() <= 1e-4 * g.abs().max(1.0),
                "w {w}: {fd} vs {g}"
            );
        }
    }

    #[test]
    fn likelihood_only_training_reduces_loss() {
        let acts = actions(3);
        let h = history(32, &acts, |a, x| 0.2 + 0.2 * a as f64 + 0.3 * x[0]);
        let template =
            DenseNet::new(&[5, 16, 16, 1], Activation::Relu, &mut rng_from_seed(4)).unwrap();
        let mut net = BbbNet::new(template, MixturePrior::default(), 1e-3).unwrap();
        let cfg = BbbConfig {
            kl_weight: 0.0,
            ..BbbConfig::default()
        };
        let mut opt = Optimizer::adam(1e-2).unwrap();
        let rows: Vec<usize> = (0..32).collect();
        let mut rng = rng_from_seed(5);
        let first = bbb_update(&mut net, &h, &rows, &cfg, &mut opt, &mut rng).unwrap();
        let mut last = first;
        for _ in 0..200 {
            last = bbb_update(&mut net, &h, &rows, &cfg, &mut opt, &mut rng).unwrap();
        }
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn sampled_forward_is_deterministic_given_noise() {
        let template = DenseNet::new(&[3, 4, 1], Activation::Tanh, &mut rng_from_seed(6)).unwrap();
        let net = BbbNet::new(template, MixturePrior::default(), 0.1).unwrap();
        let (a, _) = net.sample_net(&mut rng_from_seed(7)).unwrap();
        let (b, _) = net.sample_net(&mut rng_from_seed(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_prior_rejected() {
        let bad = MixturePrior {
            sigma2: 0.0,
            ..MixturePrior::default()
        };
        assert!(bad.validate().is_err());
    }
}
