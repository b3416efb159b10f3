//! Functional-variational Thompson-sampling agent.
//!
//! The reward model is a stochastic-input network `f(x) = g_φ(x, ξ)`: a dense
//! net whose input is the context-action vector with a noise vector `ξ`
//! appended. Each draw of `ξ` yields one coherent function sample. Training
//! maximises a measurement-set fELBO:
//!
//! - the likelihood term is a Gaussian log-likelihood of observed rewards on
//!   a minibatch of history rows;
//! - the functional KL term is estimated on a bootstrapped measurement set
//!   (history rows mixed with rows whose drug features are resampled from the
//!   action set) by fitting the spectral Stein gradient estimator to posterior
//!   and prior function samples and back-propagating the score difference.
//!
//! Action selection draws one `ξ` per round and takes the argmax over actions.

use std::sync::Arc;

use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bandit::{argmax, ActionSet, Agent, HistoryBuffer};
use crate::error::{Error, Result};
use crate::ssge::SsgeModel;
use crate::tensor::{Activation, DenseNet, Matrix, Optimizer, OptimizerKind};
use crate::{rng_from_seed, Rng};

/// How the measurement set's non-history half is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationStrategy {
    /// Keep `x_g`, substitute a uniformly random drug from the action set.
    #[default]
    HistoryActionPerturb,
    /// Add `N(0, σ_g²)` noise to `x_g`, keep the played drug.
    GenomicsOnly,
    /// Keep `x_g`, substitute a uniformly random drug other than the played one.
    ActionOnly,
    /// Every row: `x_g ~ N(0, I)` and a uniformly random drug. No history rows.
    GaussianRandom,
}

/// Whether drug features enter the network as inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ContextEncoding {
    /// Input `[x_g ‖ x_d ‖ ξ]`, one output.
    #[default]
    Concatenated,
    /// Input `[x_g ‖ ξ]`, one output head per action; drug features unused.
    PerActionHead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbnnConfig {
    pub kl_weight: f64,
    pub measurement_size: usize,
    pub strategy: PerturbationStrategy,
    pub posterior_samples: usize,
    pub prior_samples: usize,
    pub genomics_noise: f64,
    pub noise_dim: usize,
    pub noise_scale: f64,
    pub likelihood_variance: f64,
    pub grad_steps: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub encoding: ContextEncoding,
    /// Shift functions by the mean observed reward, so the zero-centred
    /// random-init prior sits at the typical reward rather than below it.
    pub center_prior: bool,
}

impl Default for FbnnConfig {
    fn default() -> Self {
        Self {
            kl_weight: 0.1,
            measurement_size: 64,
            strategy: PerturbationStrategy::HistoryActionPerturb,
            posterior_samples: 20,
            prior_samples: 20,
            genomics_noise: 1.0,
            noise_dim: 16,
            noise_scale: 1.0,
            likelihood_variance: 0.01,
            grad_steps: 100,
            batch_size: 32,
            hidden: vec![64, 64],
            activation: Activation::Relu,
            optimizer: OptimizerKind::RmsProp,
            learning_rate: 1e-3,
            encoding: ContextEncoding::Concatenated,
            center_prior: true,
        }
    }
}

impl FbnnConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("posterior_samples", self.posterior_samples),
            ("prior_samples", self.prior_samples),
            ("noise_dim", self.noise_dim),
            ("grad_steps", self.grad_steps),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::contract(format!("{name} must be ≥ 1")));
            }
        }
        if self.measurement_size < 2 {
            return Err(Error::contract("measurement_size must be ≥ 2"));
        }
        if !(self.kl_weight.is_finite() && self.kl_weight >= 0.0) {
            return Err(Error::contract(format!(
                "kl_weight must be ≥ 0, got {}",
                self.kl_weight
            )));
        }
        if self.kl_weight > 0.0 && (self.posterior_samples < 2 || self.prior_samples < 2) {
            return Err(Error::contract(
                "the KL estimator needs at least 2 posterior and 2 prior samples",
            ));
        }
        for (name, v) in [
            ("genomics_noise", self.genomics_noise),
            ("noise_scale", self.noise_scale),
            ("likelihood_variance", self.likelihood_variance),
            ("learning_rate", self.learning_rate),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::contract(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.hidden.contains(&0) {
            return Err(Error::contract("hidden widths must be ≥ 1"));
        }
        Ok(())
    }
}

/// `g_φ(x, ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticNet {
    net: DenseNet,
    context_dim: usize,
    drug_dim: usize,
    noise_dim: usize,
    noise_scale: f64,
    encoding: ContextEncoding,
    /// Constant added to every output; not trained.
    offset: f64,
}

impl StochasticNet {
    /// Freshly initialised network for the given problem dimensions.
    pub fn new(
        context_dim: usize,
        drug_dim: usize,
        num_actions: usize,
        cfg: &FbnnConfig,
        rng: &mut impl rand::Rng,
    ) -> Result<Self> {
        let (input, output) = match cfg.encoding {
            ContextEncoding::Concatenated => (context_dim + drug_dim + cfg.noise_dim, 1),
            ContextEncoding::PerActionHead => (context_dim + cfg.noise_dim, num_actions),
        };
        let mut sizes = vec![input];
        sizes.extend_from_slice(&cfg.hidden);
        sizes.push(output);
        let net = DenseNet::new(&sizes, cfg.activation, rng)?;
        Self::from_net(
            net,
            context_dim,
            drug_dim,
            cfg.noise_dim,
            cfg.noise_scale,
            cfg.encoding,
        )
    }

    /// Wraps an existing net; its input width must match the encoding.
    pub fn from_net(
        net: DenseNet,
        context_dim: usize,
        drug_dim: usize,
        noise_dim: usize,
        noise_scale: f64,
        encoding: ContextEncoding,
    ) -> Result<Self> {
        if noise_dim == 0 {
            return Err(Error::contract("noise dimension must be ≥ 1"));
        }
        if !(noise_scale.is_finite() && noise_scale > 0.0) {
            return Err(Error::contract(format!(
                "noise scale must be > 0, got {noise_scale}"
            )));
        }
        let expected = match encoding {
            ContextEncoding::Concatenated => context_dim + drug_dim + noise_dim,
            ContextEncoding::PerActionHead => context_dim + noise_dim,
        };
        if net.input_dim() != expected {
            return Err(Error::shape(format!(
                "net takes {} inputs, encoding needs {expected}",
                net.input_dim()
            )));
        }
        if encoding == ContextEncoding::Concatenated && net.output_dim() != 1 {
            return Err(Error::shape(
                "a concatenated-input net must have one output",
            ));
        }
        Ok(Self {
            net,
            context_dim,
            drug_dim,
            noise_dim,
            noise_scale,
            encoding,
            offset: 0.0,
        })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn encoding(&self) -> ContextEncoding {
        self.encoding
    }

    /// Fixed output shift `c` in `f(x) = g_φ(x, ξ) + c`.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn set_offset(&mut self, offset: f64) {
        self.offset = offset;
    }

    /// One `ξ ~ N(0, noise_scale² · I_k)`.
    pub fn draw_noise(&self, rng: &mut impl rand::Rng) -> Vec<f64> {
        (0..self.noise_dim)
            .map(|_| self.noise_scale * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    fn input_width(&self) -> usize {
        self.net.input_dim()
    }

    /// Writes the network input for point `(context, action)` under `noise`.
    fn fill_input(
        &self,
        row: &mut [f64],
        context: &[f64],
        action: usize,
        actions: &ActionSet,
        noise: &[f64],
    ) {
        let d1 = self.context_dim;
        row[..d1].copy_from_slice(context);
        match self.encoding {
            ContextEncoding::Concatenated => {
                row[d1..d1 + self.drug_dim].copy_from_slice(actions.feature(action));
                row[d1 + self.drug_dim..].copy_from_slice(noise);
            }
            ContextEncoding::PerActionHead => row[d1..].copy_from_slice(noise),
        }
    }

    fn output_column(&self, action: usize) -> usize {
        match self.encoding {
            ContextEncoding::Concatenated => 0,
            ContextEncoding::PerActionHead => action,
        }
    }

    fn check_points(
        &self,
        contexts: &Matrix,
        point_actions: &[usize],
        actions: &ActionSet,
    ) -> Result<()> {
        if contexts.cols() != self.context_dim {
            return Err(Error::shape(format!(
                "contexts have {} columns, net expects {}",
                contexts.cols(),
                self.context_dim
            )));
        }
        if contexts.rows() != point_actions.len() {
            return Err(Error::shape("one action per context row is required"));
        }
        if actions.feature_dim() != self.drug_dim && self.encoding == ContextEncoding::Concatenated
        {
            return Err(Error::shape(format!(
                "drug features have {} columns, net expects {}",
                actions.feature_dim(),
                self.drug_dim
            )));
        }
        let limit = match self.encoding {
            ContextEncoding::Concatenated => actions.len(),
            ContextEncoding::PerActionHead => self.net.output_dim().min(actions.len()),
        };
        if let Some(a) = point_actions.iter().find(|&&a| a >= limit) {
            return Err(Error::shape(format!("action {a} out of range")));
        }
        Ok(())
    }

    /// Function values at `(contexts[i], point_actions[i])` under one fixed `ξ`.
    pub fn evaluate(
        &self,
        contexts: &Matrix,
        point_actions: &[usize],
        actions: &ActionSet,
        noise: &[f64],
    ) -> Result<Vec<f64>> {
        self.check_points(contexts, point_actions, actions)?;
        if noise.len() != self.noise_dim {
            return Err(Error::shape(format!(
                "noise has {} entries, net expects {}",
                noise.len(),
                self.noise_dim
            )));
        }
        let mut input = Matrix::zeros(contexts.rows(), self.input_width());
        for (r, &a) in point_actions.iter().enumerate() {
            self.fill_input(input.row_mut(r), contexts.row(r), a, actions, noise);
        }
        let out = self.net.forward(&input)?;
        Ok(point_actions
            .iter()
            .enumerate()
            .map(|(r, &a)| out.get(r, self.output_column(a)) + self.offset)
            .collect())
    }

    /// Values of every action for one context under one `ξ`.
    pub fn action_values(
        &self,
        context: &[f64],
        actions: &ActionSet,
        noise: &[f64],
    ) -> Result<Vec<f64>> {
        let k = actions.len();
        let contexts = Matrix::from_fn(k, context.len(), |_, c| context[c]);
        let all: Vec<usize> = (0..k).collect();
        self.evaluate(&contexts, &all, actions, noise)
    }
}

/// Whether a measurement row was copied from history or synthesised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSource {
    History,
    Perturbed,
}

/// Finite set of context-action points on which functions are compared.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    /// `n × d₁`.
    pub contexts: Matrix,
    pub actions: Vec<usize>,
    pub sources: Vec<RowSource>,
}

impl MeasurementSet {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Concatenated `[x_g ‖ x_d]` rows (`n × (d₁ + d₂)`).
    pub fn points(&self, actions: &ActionSet) -> Matrix {
        let d1 = self.contexts.cols();
        let d2 = actions.feature_dim();
        let mut m = Matrix::zeros(self.len(), d1 + d2);
        for (r, &a) in self.actions.iter().enumerate() {
            let row = m.row_mut(r);
            row[..d1].copy_from_slice(self.contexts.row(r));
            row[d1..].copy_from_slice(actions.feature(a));
        }
        m
    }

    pub fn count(&self, source: RowSource) -> usize {
        self.sources.iter().filter(|&&s| s == source).count()
    }
}

/// One function draw evaluated on a measurement set.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSample {
    pub values: Vec<f64>,
    pub noise: Vec<f64>,
}

/// Draws one `ξ` and evaluates the net on every measurement point.
pub fn sample_function(
    net: &StochasticNet,
    points: &MeasurementSet,
    actions: &ActionSet,
    rng: &mut impl rand::Rng,
) -> Result<FunctionSample> {
    let noise = net.draw_noise(rng);
    let values = net.evaluate(&points.contexts, &points.actions, actions, &noise)?;
    Ok(FunctionSample { values, noise })
}

/// Bootstraps a measurement set of `cfg.measurement_size` rows: `⌈n/2⌉` rows
/// drawn with replacement from history and `⌊n/2⌋` perturbed rows, except for
/// [`PerturbationStrategy::GaussianRandom`] where every row is synthetic.
pub fn sample_measurement_set(
    history: &HistoryBuffer,
    actions: &ActionSet,
    cfg: &FbnnConfig,
    rng: &mut impl rand::Rng,
) -> Result<MeasurementSet> {
    if history.is_empty() {
        return Err(Error::contract("measurement sets need a non-empty history"));
    }
    let n = cfg.measurement_size;
    if n < 2 {
        return Err(Error::contract("measurement sets need at least 2 rows"));
    }
    let d1 = history.get(0).context.len();
    let k = actions.len();
    let mut contexts = Matrix::zeros(n, d1);
    let mut point_actions = Vec::with_capacity(n);
    let mut sources = Vec::with_capacity(n);

    let n_hist = match cfg.strategy {
        PerturbationStrategy::GaussianRandom => 0,
        _ => n.div_ceil(2),
    };
    for r in 0..n_hist {
        let e = history.get(rng.random_range(0..history.len()));
        contexts.row_mut(r).copy_from_slice(&e.context);
        point_actions.push(e.action);
        sources.push(RowSource::History);
    }
    let genomics_noise = Normal::new(0.0, cfg.genomics_noise)
        .map_err(|e| Error::contract(format!("genomics noise: {e}")))?;
    for r in n_hist..n {
        let action = match cfg.strategy {
            PerturbationStrategy::HistoryActionPerturb => {
                let e = history.get(rng.random_range(0..history.len()));
                contexts.row_mut(r).copy_from_slice(&e.context);
                rng.random_range(0..k)
            }
            PerturbationStrategy::ActionOnly => {
                let e = history.get(rng.random_range(0..history.len()));
                contexts.row_mut(r).copy_from_slice(&e.context);
                if k > 1 {
                    let a = rng.random_range(0..k - 1);
                    if a >= e.action {
                        a + 1
                    } else {
                        a
                    }
                } else {
                    e.action
                }
            }
            PerturbationStrategy::GenomicsOnly => {
                let e = history.get(rng.random_range(0..history.len()));
                for (dst, src) in contexts.row_mut(r).iter_mut().zip(&e.context) {
                    *dst = src + genomics_noise.sample(rng);
                }
                e.action
            }
            PerturbationStrategy::GaussianRandom => {
                for dst in contexts.row_mut(r) {
                    *dst = rng.sample(StandardNormal);
                }
                rng.random_range(0..k)
            }
        };
        point_actions.push(action);
        sources.push(RowSource::Perturbed);
    }
    Ok(MeasurementSet {
        contexts,
        actions: point_actions,
        sources,
    })
}

/// Per-step diagnostics of one [`functional_update`] call.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateStats {
    /// Mean negative log-likelihood (up to a constant) per gradient step.
    pub nll: Vec<f64>,
}

/// Runs `cfg.grad_steps` steps of measurement-set fELBO ascent.
///
/// Each step draws a measurement set `H`, a minibatch of history rows and
/// `S` posterior noise vectors; the likelihood gradient comes from the
/// minibatch, the KL gradient from the score difference `ĝ_q − ĝ_p` estimated
/// on posterior and prior function values over `H`. The prior is an ensemble
/// of freshly initialised networks, re-drawn once per call.
pub fn functional_update(
    net: &mut StochasticNet,
    history: &HistoryBuffer,
    actions: &ActionSet,
    cfg: &FbnnConfig,
    opt: &mut Optimizer,
    rng: &mut impl rand::Rng,
) -> Result<UpdateStats> {
    cfg.validate()?;
    if history.is_empty() {
        return Err(Error::contract(
            "functional update needs a non-empty history",
        ));
    }
    let use_kl = cfg.kl_weight > 0.0;
    let priors: Vec<StochasticNet> = if use_kl {
        (0..cfg.prior_samples)
            .map(|_| StochasticNet::new(net.context_dim, net.drug_dim, actions.len(), cfg, rng))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    // Posterior and prior share the offset, so it cancels in the KL term
    // and only the likelihood sees it.
    if cfg.center_prior {
        let all: Vec<usize> = (0..history.len()).collect();
        let rewards = history.rewards(&all);
        net.offset = rewards.iter().sum::<f64>() / rewards.len() as f64;
    }
    let offset = net.offset;
    let s_count = cfg.posterior_samples;
    let batch = cfg.batch_size;
    let var = cfg.likelihood_variance;
    let mut stats = UpdateStats::default();

    for _ in 0..cfg.grad_steps {
        let measurement = if use_kl {
            Some(sample_measurement_set(history, actions, cfg, rng)?)
        } else {
            None
        };
        let n = measurement.as_ref().map_or(0, MeasurementSet::len);
        let batch_idx: Vec<usize> = (0..batch)
            .map(|_| rng.random_range(0..history.len()))
            .collect();

        // Stack S blocks of [H rows; batch rows], each block sharing one ξ.
        let block = n + batch;
        let mut input = Matrix::zeros(s_count * block, net.input_width());
        let mut cols = Vec::with_capacity(s_count * block);
        for s in 0..s_count {
            let noise = net.draw_noise(rng);
            if let Some(h) = &measurement {
                for r in 0..n {
                    let a = h.actions[r];
                    net.fill_input(
                        input.row_mut(s * block + r),
                        h.contexts.row(r),
                        a,
                        actions,
                        &noise,
                    );
                    cols.push(net.output_column(a));
                }
            }
            for (b, &i) in batch_idx.iter().enumerate() {
                let e = history.get(i);
                net.fill_input(
                    input.row_mut(s * block + n + b),
                    &e.context,
                    e.action,
                    actions,
                    &noise,
                );
                cols.push(net.output_column(e.action));
            }
        }
        let trace = net.net.forward_trace(&input, None)?;
        let out = trace.output();
        let mut loss_grad = Matrix::zeros(out.rows(), out.cols());

        let mut nll = 0.0;
        let lik_scale = 1.0 / (var * (batch * s_count) as f64);
        for s in 0..s_count {
            for (b, &i) in batch_idx.iter().enumerate() {
                let row = s * block + n + b;
                let y_hat = out.get(row, cols[row]) + offset;
                let err = y_hat - history.get(i).reward;
                nll += err * err / (2.0 * var);
                loss_grad.set(row, cols[row], err * lik_scale);
            }
        }
        nll /= (batch * s_count) as f64;
        if !nll.is_finite() {
            return Err(Error::numeric("non-finite likelihood loss"));
        }
        stats.nll.push(nll);

        if let Some(h) = &measurement {
            let posterior = Matrix::from_fn(s_count, n, |s, r| {
                let row = s * block + r;
                out.get(row, cols[row])
            });
            let mut prior_values = Matrix::zeros(priors.len(), n);
            for (p, prior) in priors.iter().enumerate() {
                let noise = prior.draw_noise(rng);
                let v = prior.evaluate(&h.contexts, &h.actions, actions, &noise)?;
                prior_values.row_mut(p).copy_from_slice(&v);
            }
            let score_q = SsgeModel::fit_auto(&posterior)?.score(&posterior)?;
            let score_p = SsgeModel::fit_auto(&prior_values)?.score(&posterior)?;
            let kl_scale = cfg.kl_weight / s_count as f64;
            for s in 0..s_count {
                for r in 0..n {
                    let row = s * block + r;
                    let g = kl_scale * (score_q.get(s, r) - score_p.get(s, r));
                    loss_grad.set(row, cols[row], g);
                }
            }
        }

        let tape = net.net.backward_trace(&trace, &loss_grad)?;
        opt.step(&mut net.net, &tape)?;
    }
    Ok(stats)
}

/// Thompson step: one `ξ` shared across all actions, argmax with ties to the
/// lowest index.
pub fn select_action(
    net: &StochasticNet,
    context: &[f64],
    actions: &ActionSet,
    rng: &mut impl rand::Rng,
) -> Result<usize> {
    if actions.is_empty() {
        return Err(Error::contract("no actions to choose from"));
    }
    let noise = net.draw_noise(rng);
    let values = net.action_values(context, actions, &noise)?;
    Ok(argmax(&values))
}

/// Monte Carlo predictive standard deviation at each point over `samples`
/// function draws.
pub fn predictive_std(
    net: &StochasticNet,
    contexts: &Matrix,
    point_actions: &[usize],
    actions: &ActionSet,
    samples: usize,
    rng: &mut impl rand::Rng,
) -> Result<Vec<f64>> {
    if samples < 2 {
        return Err(Error::contract(
            "predictive spread needs at least 2 samples",
        ));
    }
    let n = point_actions.len();
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    for _ in 0..samples {
        let noise = net.draw_noise(rng);
        let v = net.evaluate(contexts, point_actions, actions, &noise)?;
        for i in 0..n {
            sum[i] += v[i];
            sum_sq[i] += v[i] * v[i];
        }
    }
    let m = samples as f64;
    Ok((0..n)
        .map(|i| {
            let mean = sum[i] / m;
            ((sum_sq[i] / m - mean * mean).max(0.0) * m / (m - 1.0)).sqrt()
        })
        .collect())
}

/// Thompson-sampling agent backed by a [`StochasticNet`].
pub struct FbnnAgent {
    name: String,
    net: StochasticNet,
    cfg: FbnnConfig,
    optimizer: Optimizer,
    actions: Arc<ActionSet>,
    rng: Rng,
}

impl FbnnAgent {
    pub fn new(
        name: impl Into<String>,
        context_dim: usize,
        actions: Arc<ActionSet>,
        cfg: FbnnConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng_from_seed(seed);
        let net = StochasticNet::new(
            context_dim,
            actions.feature_dim(),
            actions.len(),
            &cfg,
            &mut rng,
        )?;
        let optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate)?;
        Ok(Self {
            name: name.into(),
            net,
            cfg,
            optimizer,
            actions,
            rng,
        })
    }

    pub fn net(&self) -> &StochasticNet {
        &self.net
    }

    pub fn config(&self) -> &FbnnConfig {
        &self.cfg
    }

    /// Agent generator, exposed for Monte Carlo diagnostics.
    pub fn rng_mut(&mut self) -> &mut Rng {
        &mut self.rng
    }
}

impl Agent for FbnnAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn choose(&mut self, context: &[f64]) -> Result<usize> {
        select_action(&self.net, context, &self.actions, &mut self.rng)
    }

    fn update(&mut self, history: &HistoryBuffer) -> Result<()> {
        functional_update(
            &mut self.net,
            history,
            &self.actions,
            &self.cfg,
            &mut self.optimizer,
            &mut self.rng,
        )
        .map(|_| ())
    }
}
