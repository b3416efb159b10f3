//! Agent specifications: kind, name and a hyperparameter grid.

use std::fmt::Write as _;

use fpbandit::bandit::{Agent, Environment, HistoryBuffer};
use fpbandit::baselines::{
    BbbAgent, BbbConfig, BootstrapAgent, DropoutAgent, MixturePrior, NeuralGreedyAgent,
    ParameterNoiseAgent, TrainConfig, UniformAgent, DEFAULT_ENSEMBLE, DEFAULT_EPSILON,
    DEFAULT_SIGMA,
};
use fpbandit::fbnn::{ContextEncoding, FbnnAgent, FbnnConfig, PerturbationStrategy};
use fpbandit::tensor::{Activation, OptimizerKind};
use serde::{Deserialize, Serialize};
use toml::Value;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Uniform,
    /// Plays the per-round best action; a regret-zero reference.
    Oracle,
    NeuralGreedy,
    Bbb,
    Dropout,
    Bootstrap,
    ParameterNoise,
    Fbnn,
}

const TRAIN_KEYS: &[&str] = &[
    "hidden",
    "activation",
    "optimizer",
    "learning_rate",
    "grad_steps",
    "batch_size",
];

impl AgentKind {
    pub fn label(self) -> &'static str {
        match self {
            AgentKind::Uniform => "uniform",
            AgentKind::Oracle => "oracle",
            AgentKind::NeuralGreedy => "neural-greedy",
            AgentKind::Bbb => "bbb",
            AgentKind::Dropout => "dropout",
            AgentKind::Bootstrap => "bootstrap",
            AgentKind::ParameterNoise => "parameter-noise",
            AgentKind::Fbnn => "fbnn",
        }
    }

    fn own_keys(self) -> &'static [&'static str] {
        match self {
            AgentKind::Uniform | AgentKind::Oracle => &[],
            AgentKind::NeuralGreedy => &["epsilon"],
            AgentKind::Dropout => &["rate"],
            AgentKind::Bootstrap => &["ensemble"],
            AgentKind::ParameterNoise => &["sigma"],
            AgentKind::Bbb => &[
                "prior_mean",
                "prior_sigma1",
                "prior_sigma2",
                "prior_pi",
                "init_sigma",
                "kl_weight",
                "likelihood_variance",
            ],
            AgentKind::Fbnn => &[
                "kl_weight",
                "measurement_size",
                "strategy",
                "posterior_samples",
                "prior_samples",
                "genomics_noise",
                "noise_dim",
                "noise_scale",
                "likelihood_variance",
                "encoding",
                "center_prior",
            ],
        }
    }

    fn is_neural(self) -> bool {
        !matches!(self, AgentKind::Uniform | AgentKind::Oracle)
    }

    fn accepts(self, key: &str) -> bool {
        self.own_keys().contains(&key) || (self.is_neural() && TRAIN_KEYS.contains(&key))
    }

    /// Search ranges used by `sweep` for keys the config leaves unset.
    fn default_grid(self) -> Vec<(&'static str, Vec<Value>)> {
        let floats = |v: &[f64]| v.iter().map(|&x| Value::Float(x)).collect::<Vec<_>>();
        let decades = floats(&[1e-1, 1e-2, 1e-3, 1e-4, 1e-5]);
        let mut grid = Vec::new();
        if self.is_neural() {
            grid.push(("learning_rate", decades.clone()));
        }
        match self {
            AgentKind::NeuralGreedy => grid.push(("epsilon", floats(&[0.05, 0.1, 0.2, 0.4, 0.6]))),
            AgentKind::Dropout => grid.push(("rate", floats(&[0.2, 0.4, 0.6, 0.8]))),
            AgentKind::Bootstrap => grid.push((
                "ensemble",
                [2, 3, 5, 10].iter().map(|&q| Value::Integer(q)).collect(),
            )),
            AgentKind::ParameterNoise => grid.push(("sigma", decades)),
            AgentKind::Bbb => {
                grid.push(("prior_sigma1", floats(&[1.0, 1e-1, 1e-2])));
                grid.push(("prior_mean", floats(&[1.0, 1e-1, 1e-2])));
            }
            _ => {}
        }
        grid
    }
}

/// One agent entry of the config: its grid is the cartesian product of the
/// listed values, enumerated with the last key varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub name: String,
    pub kind: AgentKind,
    pub grid: Vec<(String, Vec<Value>)>,
}

/// A single hyperparameter assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub values: Vec<(String, Value)>,
}

impl GridPoint {
    /// `key=value;key=value` in declared order; empty for no parameters.
    pub fn label(&self) -> String {
        let mut out = String::new();
        for (i, (k, v)) in self.values.iter().enumerate() {
            if i > 0 {
                out.push(';');
            }
            let _ = write!(out, "{k}={}", format_value(v));
        }
        out
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.values.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    fn table(&self) -> toml::Table {
        self.values.iter().cloned().collect()
    }
}

fn format_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Float(f) => format!("{f}"),
        Value::Integer(i) => i.to_string(),
        Value::Boolean(b) => b.to_string(),
        Value::Array(items) => {
            let inner: Vec<String> = items.iter().map(format_value).collect();
            format!("[{}]", inner.join(","))
        }
        other => other.to_string(),
    }
}

/// `hidden` takes a list of widths, so only a list of lists is a grid there.
fn is_grid(key: &str, value: &Value) -> bool {
    match value {
        Value::Array(items) if key == "hidden" => {
            items.iter().all(|v| matches!(v, Value::Array(_))) && !items.is_empty()
        }
        Value::Array(_) => true,
        _ => false,
    }
}

impl AgentSpec {
    pub fn new(kind: AgentKind) -> Self {
        Self {
            name: kind.label().to_string(),
            kind,
            grid: Vec::new(),
        }
    }

    /// Adds a single-valued parameter.
    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.grid.push((key.to_string(), vec![value.into()]));
        self
    }

    /// Adds a multi-valued parameter.
    pub fn with_grid(mut self, key: &str, values: Vec<Value>) -> Self {
        self.grid.push((key.to_string(), values));
        self
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn from_table(mut table: toml::Table) -> Result<Self> {
        let kind: AgentKind = table
            .remove("kind")
            .ok_or_else(|| CliError::invalid("every agent needs a `kind`"))?
            .try_into()
            .map_err(|e| CliError::invalid(format!("agent kind: {e}")))?;
        let name = match table.remove("name") {
            Some(Value::String(s)) => s,
            Some(other) => {
                return Err(CliError::invalid(format!(
                    "agent name must be a string, got {other}"
                )))
            }
            None => kind.label().to_string(),
        };
        let grid = table
            .into_iter()
            .map(|(k, v)| {
                let values = if is_grid(&k, &v) {
                    match v {
                        Value::Array(items) => items,
                        _ => unreachable!(),
                    }
                } else {
                    vec![v]
                };
                (k, values)
            })
            .collect();
        let spec = Self { name, kind, grid };
        spec.points()?;
        Ok(spec)
    }

    /// Every grid point, each checked against the agent kind.
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        for (key, values) in &self.grid {
            if !self.kind.accepts(key) {
                return Err(CliError::invalid(format!(
                    "agent {}: `{key}` is not a {} parameter",
                    self.name,
                    self.kind.label()
                )));
            }
            if values.is_empty() {
                return Err(CliError::invalid(format!(
                    "agent {}: grid for `{key}` is empty",
                    self.name
                )));
            }
        }
        let mut points = vec![GridPoint { values: Vec::new() }];
        for (key, values) in &self.grid {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut next = p.clone();
                        next.values.push((key.clone(), v.clone()));
                        next
                    })
                })
                .collect();
        }
        for p in &points {
            params(p).map_err(|e| CliError::invalid(format!("agent {}: {e}", self.name)))?;
        }
        Ok(points)
    }

    pub fn is_single_point(&self) -> bool {
        self.grid.iter().all(|(_, v)| v.len() == 1)
    }

    /// Fills unset keys with the default search ranges.
    pub fn with_default_grids(&self) -> Self {
        let mut out = self.clone();
        for (key, values) in self.kind.default_grid() {
            if !out.grid.iter().any(|(k, _)| k == key) {
                out.grid.push((key.to_string(), values));
            }
        }
        out
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Params {
    hidden: Option<Vec<usize>>,
    activation: Option<Activation>,
    optimizer: Option<OptimizerKind>,
    learning_rate: Option<f64>,
    grad_steps: Option<usize>,
    batch_size: Option<usize>,
    epsilon: Option<f64>,
    rate: Option<f64>,
    ensemble: Option<usize>,
    sigma: Option<f64>,
    prior_mean: Option<f64>,
    prior_sigma1: Option<f64>,
    prior_sigma2: Option<f64>,
    prior_pi: Option<f64>,
    init_sigma: Option<f64>,
    kl_weight: Option<f64>,
    likelihood_variance: Option<f64>,
    measurement_size: Option<usize>,
    strategy: Option<PerturbationStrategy>,
    posterior_samples: Option<usize>,
    prior_samples: Option<usize>,
    genomics_noise: Option<f64>,
    noise_dim: Option<usize>,
    noise_scale: Option<f64>,
    encoding: Option<ContextEncoding>,
    center_prior: Option<bool>,
}

fn params(point: &GridPoint) -> Result<Params> {
    Value::Table(point.table())
        .try_into()
        .map_err(|e| CliError::invalid(format!("{}: {e}", point.label())))
}

impl Params {
    fn train(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            hidden: self.hidden.clone().unwrap_or(d.hidden),
            activation: self.activation.unwrap_or(d.activation),
            optimizer: self.optimizer.unwrap_or(d.optimizer),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            grad_steps: self.grad_steps.unwrap_or(d.grad_steps),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
        }
    }

    fn bbb(&self) -> BbbConfig {
        let d = BbbConfig::default();
        BbbConfig {
            prior: MixturePrior {
                mean: self.prior_mean.unwrap_or(d.prior.mean),
                sigma1: self.prior_sigma1.unwrap_or(d.prior.sigma1),
                sigma2: self.prior_sigma2.unwrap_or(d.prior.sigma2),
                pi: self.prior_pi.unwrap_or(d.prior.pi),
            },
            init_sigma: self.init_sigma.unwrap_or(d.init_sigma),
            likelihood_variance: self.likelihood_variance.unwrap_or(d.likelihood_variance),
            kl_weight: self.kl_weight.unwrap_or(d.kl_weight),
        }
    }

    fn fbnn(&self) -> FbnnConfig {
        let d = FbnnConfig::default();
        let t = self.train();
        FbnnConfig {
            kl_weight: self.kl_weight.unwrap_or(d.kl_weight),
            measurement_size: self.measurement_size.unwrap_or(d.measurement_size),
            strategy: self.strategy.unwrap_or(d.strategy),
            posterior_samples: self.posterior_samples.unwrap_or(d.posterior_samples),
            prior_samples: self.prior_samples.unwrap_or(d.prior_samples),
            genomics_noise: self.genomics_noise.unwrap_or(d.genomics_noise),
            noise_dim: self.noise_dim.unwrap_or(d.noise_dim),
            noise_scale: self.noise_scale.unwrap_or(d.noise_scale),
            likelihood_variance: self.likelihood_variance.unwrap_or(d.likelihood_variance),
            grad_steps: t.grad_steps,
            batch_size: t.batch_size,
            hidden: t.hidden,
            activation: t.activation,
            optimizer: t.optimizer,
            learning_rate: t.learning_rate,
            encoding: self.encoding.unwrap_or(d.encoding),
            center_prior: self.center_prior.unwrap_or(d.center_prior),
        }
    }
}

/// Replays its own copy of the environment stream and always plays the
/// best action.
struct OracleAgent {
    name: String,
    env: Environment,
}

impl Agent for OracleAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn choose(&mut self, _context: &[f64]) -> fpbandit::Result<usize> {
        Ok(self.env.next_round().best_action())
    }

    fn update(&mut self, _history: &HistoryBuffer) -> fpbandit::Result<()> {
        Ok(())
    }
}

/// Instantiates the agent for one trial. `env_seed` is the seed the trial's
/// environment stream is replayed with (used only by the oracle).
pub fn build_agent(
    spec: &AgentSpec,
    point: &GridPoint,
    env: &Environment,
    env_seed: u64,
    agent_seed: u64,
) -> Result<Box<dyn Agent>> {
    let p = params(point)?;
    let actions = env.actions().clone();
    let d1 = env.context_dim();
    let name = spec.name.clone();
    Ok(match spec.kind {
        AgentKind::Uniform => Box::new(UniformAgent::new(name, actions.len(), agent_seed)),
        AgentKind::Oracle => {
            let mut env = env.clone();
            env.reseed(env_seed);
            Box::new(OracleAgent { name, env })
        }
        AgentKind::NeuralGreedy => Box::new(NeuralGreedyAgent::new(
            name,
            d1,
            actions,
            p.epsilon.unwrap_or(DEFAULT_EPSILON),
            p.train(),
            agent_seed,
        )?),
        AgentKind::Dropout => Box::new(DropoutAgent::new(
            name,
            d1,
            actions,
            p.rate.unwrap_or(0.2),
            p.train(),
            agent_seed,
        )?),
        AgentKind::Bootstrap => Box::new(BootstrapAgent::new(
            name,
            d1,
            actions,
            p.ensemble.unwrap_or(DEFAULT_ENSEMBLE),
            p.train(),
            agent_seed,
        )?),
        AgentKind::ParameterNoise => Box::new(ParameterNoiseAgent::new(
            name,
            d1,
            actions,
            p.sigma.unwrap_or(DEFAULT_SIGMA),
            p.train(),
            agent_seed,
        )?),
        AgentKind::Bbb => Box::new(BbbAgent::new(
            name,
            d1,
            actions,
            p.bbb(),
            p.train(),
            agent_seed,
        )?),
        AgentKind::Fbnn => Box::new(FbnnAgent::new(name, d1, actions, p.fbnn(), agent_seed)?),
    })
}
