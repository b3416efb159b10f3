use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::actions::{argmax, ActionSet};
use crate::data::{minmax_scale, ScaleAxis};
use crate::error::{Error, Result};
use crate::tensor::{Activation, DenseLayer, DenseNet, Matrix};
use crate::{rng_from_seed, Rng};

pub const DEFAULT_POOL_SIZE: usize = 500;
pub const FINGERPRINT_DENSITY: f64 = 0.25;
pub const CALIBRATION_DRAWS: usize = 10_000;
pub const NONLINEAR_WIDTH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvironmentKind {
    TabularReplay,
    SyntheticLinear,
    SyntheticNonlinear,
}

impl EnvironmentKind {
    pub fn label(self) -> &'static str {
        match self {
            EnvironmentKind::TabularReplay => "tabular-replay",
            EnvironmentKind::SyntheticLinear => "synthetic-linear",
            EnvironmentKind::SyntheticNonlinear => "synthetic-nonlinear",
        }
    }
}

/// One emitted round. The hidden reward vector is only reachable through the
/// trial loop; agents receive the context and a single revealed reward.
#[derive(Debug, Clone, Copy)]
pub struct Round<'a> {
    pub row: usize,
    pub context: &'a [f64],
    rewards: &'a [f64],
}

impl<'a> Round<'a> {
    pub fn rewards(&self) -> &'a [f64] {
        self.rewards
    }

    /// Per-round best action, ties to the lowest index.
    pub fn best_action(&self) -> usize {
        argmax(self.rewards)
    }
}

/// A replayable reward table: contexts are drawn uniformly with replacement
/// and every context carries a fully observed reward vector in `[0, 1]^K`.
#[derive(Debug, Clone)]
pub struct Environment {
    kind: EnvironmentKind,
    contexts: Matrix,
    rewards: Matrix,
    actions: Arc<ActionSet>,
    rng: Rng,
}

impl Environment {
    pub fn kind(&self) -> EnvironmentKind {
        self.kind
    }

    pub fn actions(&self) -> &Arc<ActionSet> {
        &self.actions
    }

    pub fn context_dim(&self) -> usize {
        self.contexts.cols()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn contexts(&self) -> &Matrix {
        &self.contexts
    }

    /// Hidden `N × K` reward table.
    pub fn reward_table(&self) -> &Matrix {
        &self.rewards
    }

    /// Restarts the round stream.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = rng_from_seed(seed);
    }

    pub fn next_round(&mut self) -> Round<'_> {
        let row = self.rng.random_range(0..self.contexts.rows());
        Round {
            row,
            context: self.contexts.row(row),
            rewards: self.rewards.row(row),
        }
    }
}

/// Replays a fully observed table.
pub fn make_tabular_replay(
    contexts: Matrix,
    rewards: Matrix,
    actions: ActionSet,
    seed: u64,
) -> Result<Environment> {
    build(
        EnvironmentKind::TabularReplay,
        contexts,
        rewards,
        actions,
        seed,
    )
}

fn build(
    kind: EnvironmentKind,
    contexts: Matrix,
    rewards: Matrix,
    actions: ActionSet,
    seed: u64,
) -> Result<Environment> {
    if contexts.rows() == 0 {
        return Err(Error::contract(
            "the environment needs at least one context",
        ));
    }
    if rewards.rows() != contexts.rows() {
        return Err(Error::shape(format!(
            "{} reward rows for {} contexts",
            rewards.rows(),
            contexts.rows()
        )));
    }
    if rewards.cols() != actions.len() {
        return Err(Error::shape(format!(
            "{} reward columns for {} actions",
            rewards.cols(),
            actions.len()
        )));
    }
    contexts.ensure_finite("contexts")?;
    if let Some(pos) = rewards.data().iter().position(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::contract(format!(
            "reward at row {}, action {} is missing or outside [0, 1]",
            pos / rewards.cols(),
            pos % rewards.cols()
        )));
    }
    Ok(Environment {
        kind,
        contexts,
        rewards,
        actions: Arc::new(actions),
        rng: rng_from_seed(seed),
    })
}

/// Parameters shared by the synthetic environment builders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub context_dim: usize,
    pub drug_dim: usize,
    pub actions: usize,
    pub seed: u64,
    #[serde(default = "default_pool")]
    pub pool_size: usize,
    /// Number of action pairs `(2i, 2i+1)` whose fingerprints differ in a
    /// single bit.
    #[serde(default)]
    pub near_duplicate_pairs: usize,
}

fn default_pool() -> usize {
    DEFAULT_POOL_SIZE
}

impl SyntheticSpec {
    pub fn new(context_dim: usize, drug_dim: usize, actions: usize, seed: u64) -> Self {
        Self {
            context_dim,
            drug_dim,
            actions,
            seed,
            pool_size: DEFAULT_POOL_SIZE,
            near_duplicate_pairs: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.context_dim == 0 || self.drug_dim == 0 || self.actions == 0 || self.pool_size == 0 {
            return Err(Error::contract("synthetic dimensions must all be ≥ 1"));
        }
        if 2 * self.near_duplicate_pairs > self.actions {
            return Err(Error::contract(format!(
                "{} near-duplicate pairs need {} actions",
                self.near_duplicate_pairs,
                2 * self.near_duplicate_pairs
            )));
        }
        if self.drug_dim < 63 && (self.actions as u64) > (1u64 << self.drug_dim) {
            return Err(Error::contract(format!(
                "{} distinct fingerprints do not fit in {} bits",
                self.actions, self.drug_dim
            )));
        }
        Ok(())
    }

    /// Min-max scaled standard-normal context pool.
    fn contexts(&self, rng: &mut Rng) -> Matrix {
        let raw = Matrix::from_fn(self.pool_size, self.context_dim, |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        });
        minmax_scale(&raw, ScaleAxis::Columns)
    }

    /// Distinct random 0/1 fingerprints with density 0.25.
    fn fingerprints(&self, rng: &mut Rng) -> Result<ActionSet> {
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(self.actions);
        let mut attempts = 0;
        while rows.len() < self.actions {
            attempts += 1;
            if attempts > 100_000 {
                return Err(Error::numeric("could not draw distinct fingerprints"));
            }
            let a = rows.len();
            let candidate: Vec<f64> = if a % 2 == 1 && a / 2 < self.near_duplicate_pairs {
                let mut c = rows[a - 1].clone();
                let bit = rng.random_range(0..self.drug_dim);
                c[bit] = 1.0 - c[bit];
                c
            } else {
                (0..self.drug_dim)
                    .map(|_| {
                        if rng.random_bool(FINGERPRINT_DENSITY) {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect()
            };
            if !rows.contains(&candidate) {
                rows.push(candidate);
            }
        }
        ActionSet::with_default_ids(Matrix::from_rows(&rows)?)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Reward `clip₀¹(sigmoid(w · [x_g ‖ x_d]))` for a fixed random `w`.
pub fn make_synthetic_linear(
    context_dim: usize,
    drug_dim: usize,
    actions: usize,
    seed: u64,
) -> Result<Environment> {
    synthetic_linear(&SyntheticSpec::new(context_dim, drug_dim, actions, seed))
}

pub fn synthetic_linear(spec: &SyntheticSpec) -> Result<Environment> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let contexts = spec.contexts(&mut rng);
    let actions = spec.fingerprints(&mut rng)?;
    let weights: Vec<f64> = (0..spec.context_dim + spec.drug_dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let rewards = Matrix::from_fn(contexts.rows(), actions.len(), |r, a| {
        let x = actions.concat(contexts.row(r), a);
        let z: f64 = x.iter().zip(&weights).map(|(x, w)| x * w).sum();
        sigmoid(z).clamp(0.0, 1.0)
    });
    build(
        EnvironmentKind::SyntheticLinear,
        contexts,
        rewards,
        actions,
        spec.seed,
    )
}

/// Weight vector of [`make_synthetic_linear`], re-derived from the seed.
/// Exposed for tests that check the reward table against a direct evaluation.
pub fn synthetic_linear_weights(spec: &SyntheticSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let _ = spec.contexts(&mut rng);
    let _ = spec.fingerprints(&mut rng)?;
    Ok((0..spec.context_dim + spec.drug_dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// Reward from a fixed random tanh network (two hidden layers of width 32)
/// over `[x_g ‖ x_d]`, min-max scaled over a 10,000-draw calibration sample
/// and clipped to `[0, 1]`.
pub fn make_synthetic_nonlinear(
    context_dim: usize,
    drug_dim: usize,
    actions: usize,
    seed: u64,
) -> Result<Environment> {
    synthetic_nonlinear(&SyntheticSpec::new(context_dim, drug_dim, actions, seed))
}

pub fn synthetic_nonlinear(spec: &SyntheticSpec) -> Result<Environment> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let contexts = spec.contexts(&mut rng);
    let actions = spec.fingerprints(&mut rng)?;
    let input = spec.context_dim + spec.drug_dim;
    let sizes = [input, NONLINEAR_WIDTH, NONLINEAR_WIDTH, 1];
    let mut layers = Vec::new();
    for w in sizes.windows(2) {
        let gain = if w[1] == 1 { 1.0 } else { 3.0 };
        let dist = Normal::new(0.0, gain / (w[0] as f64).sqrt()).expect("finite std");
        let weights = Matrix::from_fn(w[0], w[1], |_, _| dist.sample(&mut rng));
        let bias = (0..w[1])
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        layers.push(DenseLayer { weights, bias });
    }
    let net = DenseNet::from_layers(layers, vec![Activation::Tanh; 2])?;

    let n = contexts.rows();
    let k = actions.len();
    let mut all = Matrix::zeros(n * k, input);
    for r in 0..n {
        for a in 0..k {
            all.row_mut(r * k + a)
                .copy_from_slice(&actions.concat(contexts.row(r), a));
        }
    }
    let raw = net.forward(&all)?;

    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..CALIBRATION_DRAWS {
        let cell = rng.random_range(0..n * k);
        let v = raw.get(cell, 0);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let rewards = Matrix::from_fn(n, k, |r, a| {
        ((raw.get(r * k + a, 0) - lo) / span).clamp(0.0, 1.0)
    });
    build(
        EnvironmentKind::SyntheticNonlinear,
        contexts,
        rewards,
        actions,
        spec.seed,
    )
}
