//! TOML experiment configuration.
//!
//! ```toml
//! rounds = 2000
//! trials = 20
//! seed = 7
//! output = "results/nonlinear"
//! resample_environment = true      # fresh synthetic instance per trial
//!
//! [environment]
//! kind = "synthetic-nonlinear"     # synthetic-linear | synthetic-nonlinear | tabular
//! context_dim = 20
//! drug_dim = 16
//! actions = 10
//! seed = 1
//!
//! [[agents]]
//! kind = "neural-greedy"
//! epsilon = [0.05, 0.1, 0.2]       # a list is a grid; a scalar is a single value
//! learning_rate = 1e-3
//! ```
//!
//! Unknown keys anywhere are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use fpbandit::bandit::{
    make_tabular_replay, synthetic_linear, synthetic_nonlinear, Environment, SyntheticSpec,
    DEFAULT_UPDATE_EVERY,
};
use fpbandit::data::{load_screen, prepare, PrepareOptions, ScreenPaths, DEFAULT_PCA_DIMS};
use serde::{Deserialize, Serialize};

use crate::agents::AgentSpec;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    SyntheticLinear(SyntheticSpec),
    SyntheticNonlinear(SyntheticSpec),
    /// Replays a screen directory (`expression.csv`, `response.csv`,
    /// `fingerprints.csv`). With `prepare = true` the raw screen is filtered,
    /// projected and scaled first; otherwise it must already be complete and
    /// in `[0, 1]`.
    Tabular {
        data_dir: PathBuf,
        #[serde(default)]
        prepare: bool,
        #[serde(default = "default_pca_dims")]
        pca_dims: usize,
        #[serde(default)]
        negate_response: bool,
    },
}

fn default_pca_dims() -> usize {
    DEFAULT_PCA_DIMS
}

impl EnvironmentSpec {
    pub fn label(&self) -> &'static str {
        match self {
            EnvironmentSpec::SyntheticLinear(_) => "synthetic-linear",
            EnvironmentSpec::SyntheticNonlinear(_) => "synthetic-nonlinear",
            EnvironmentSpec::Tabular { .. } => "tabular",
        }
    }

    /// The same spec with the synthetic generator reseeded for `trial`, so
    /// every trial faces a fresh draw from the environment family.
    pub fn resampled(&self, trial: usize) -> Result<Self> {
        let reseed = |spec: &SyntheticSpec| SyntheticSpec {
            seed: crate::seeds::environment_seed(spec.seed, trial),
            ..spec.clone()
        };
        match self {
            EnvironmentSpec::SyntheticLinear(spec) => {
                Ok(EnvironmentSpec::SyntheticLinear(reseed(spec)))
            }
            EnvironmentSpec::SyntheticNonlinear(spec) => {
                Ok(EnvironmentSpec::SyntheticNonlinear(reseed(spec)))
            }
            EnvironmentSpec::Tabular { .. } => Err(CliError::invalid(
                "a tabular environment cannot be resampled",
            )),
        }
    }

    /// Builds the environment; relative data paths resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<Environment> {
        Ok(match self {
            EnvironmentSpec::SyntheticLinear(spec) => synthetic_linear(spec)?,
            EnvironmentSpec::SyntheticNonlinear(spec) => synthetic_nonlinear(spec)?,
            EnvironmentSpec::Tabular {
                data_dir,
                prepare: run_prepare,
                pca_dims,
                negate_response,
            } => {
                let dir = base.join(data_dir);
                let raw = load_screen(&ScreenPaths::in_dir(&dir))?;
                if *run_prepare {
                    let p = prepare(
                        &raw,
                        PrepareOptions {
                            dims: *pca_dims,
                            negate_response: *negate_response,
                        },
                    )?;
                    make_tabular_replay(p.contexts, p.responses, p.actions, 0)?
                } else {
                    let actions = fpbandit::bandit::ActionSet::new(raw.fingerprints, raw.drug_ids)?;
                    make_tabular_replay(raw.expression, raw.response, actions, 0)?
                }
            }
        })
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

fn default_update_every() -> usize {
    DEFAULT_UPDATE_EVERY
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    rounds: usize,
    trials: usize,
    seed: u64,
    #[serde(default = "default_output")]
    output: PathBuf,
    #[serde(default = "default_update_every")]
    update_every: usize,
    #[serde(default)]
    resample_environment: bool,
    environment: EnvironmentSpec,
    agents: Vec<toml::Table>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub rounds: usize,
    pub trials: usize,
    pub seed: u64,
    pub output: PathBuf,
    pub update_every: usize,
    /// Draw a fresh synthetic environment for every trial index instead of
    /// sharing one instance across trials.
    pub resample_environment: bool,
    pub environment: EnvironmentSpec,
    pub agents: Vec<AgentSpec>,
    /// Directory relative data paths resolve against.
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        let agents = raw
            .agents
            .into_iter()
            .map(AgentSpec::from_table)
            .collect::<Result<Vec<_>>>()
            .map_err(|e| CliError::Config {
                path: origin.to_path_buf(),
                message: e.to_string(),
            })?;
        let cfg = Self {
            rounds: raw.rounds,
            trials: raw.trials,
            seed: raw.seed,
            output: raw.output,
            update_every: raw.update_every,
            resample_environment: raw.resample_environment,
            environment: raw.environment,
            agents,
            base_dir: origin.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        cfg.validate().map_err(|e| CliError::Config {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(CliError::invalid("rounds must be ≥ 1"));
        }
        if self.trials == 0 {
            return Err(CliError::invalid("trials must be ≥ 1"));
        }
        if self.update_every == 0 {
            return Err(CliError::invalid("update_every must be ≥ 1"));
        }
        if self.resample_environment && matches!(self.environment, EnvironmentSpec::Tabular { .. })
        {
            return Err(CliError::invalid(
                "resample_environment needs a synthetic environment",
            ));
        }
        if self.agents.is_empty() {
            return Err(CliError::invalid("at least one agent is required"));
        }
        let mut names: Vec<&str> = self.agents.iter().map(|a| a.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(CliError::invalid(format!(
                "agent name {:?} is used twice; set `name` to tell them apart",
                w[0]
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
rounds = 100
trials = 2
seed = 3

[environment]
kind = "synthetic-linear"
context_dim = 4
drug_dim = 6
actions = 5
seed = 1

[[agents]]
kind = "uniform"

[[agents]]
kind = "neural-greedy"
epsilon = [0.1, 0.2]
"#;

    #[test]
    fn parses_basic_config() {
        let cfg = ExperimentConfig::from_toml_str(BASIC, Path::new("x/exp.toml")).unwrap();
        assert_eq!(cfg.rounds, 100);
        assert_eq!(cfg.output, PathBuf::from("results"));
        assert_eq!(cfg.update_every, 30);
        assert_eq!(cfg.agents.len(), 2);
        assert_eq!(cfg.agents[1].points().unwrap().len(), 2);
        assert_eq!(cfg.base_dir, PathBuf::from("x"));
        assert_eq!(cfg.environment.label(), "synthetic-linear");
    }

    #[test]
    fn rejects_unknown_keys() {
        for bad in [
            BASIC.replace("seed = 3", "seed = 3\ncolour = 1"),
            BASIC.replace("seed = 1", "seed = 1\nwidth = 3"),
            BASIC.replace("epsilon", "epsilonn"),
        ] {
            let err = ExperimentConfig::from_toml_str(&bad, Path::new("c.toml")).unwrap_err();
            assert!(matches!(err, CliError::Config { .. }), "{err}");
        }
    }

    #[test]
    fn rejects_degenerate_values() {
        for bad in [
            BASIC.replace("rounds = 100", "rounds = 0"),
            BASIC.replace("trials = 2", "trials = 0"),
            BASIC.replace("epsilon = [0.1, 0.2]", "epsilon = []"),
            BASIC.replace("kind = \"neural-greedy\"", "kind = \"uniform\""),
        ] {
            assert!(
                ExperimentConfig::from_toml_str(&bad, Path::new("c.toml")).is_err(),
                "{bad}"
            );
        }
    }
}
