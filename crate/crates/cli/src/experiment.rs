//! Multi-agent, multi-trial runs and grid sweeps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fpbandit::bandit::{run_trial, Environment, RegretTrace, TrialOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{build_agent, AgentSpec, GridPoint};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::seeds::{agent_seed, environment_seed};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Overwrite existing files whose contents differ.
    pub force: bool,
    /// Worker threads; `None` uses every available core.
    pub jobs: Option<usize>,
}

/// One finished trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub trace: RegretTrace,
    pub stream_checksum: u64,
}

/// Mean ± SEM of final cumulative regret over the trials of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub agent: String,
    pub mean_final_regret: f64,
    pub sem: f64,
    pub trials: usize,
    pub best_params: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub agent: String,
    pub point: usize,
    pub params: String,
    pub mean_final_regret: f64,
    pub sem: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentOutcome {
    pub name: String,
    pub point: GridPoint,
    pub params: String,
    pub trials: Vec<TrialRecord>,
}

#[derive(Debug, Default)]
pub struct ExperimentOutcome {
    pub summary: Vec<SummaryRow>,
    pub sweep: Vec<SweepRow>,
    pub agents: Vec<AgentOutcome>,
    /// Agents whose run aborted; the rest of the experiment still completed.
    pub failures: Vec<CliError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub environment: String,
    pub rounds: usize,
    pub trials: usize,
    pub seed: u64,
    pub resample_environment: bool,
    pub agents: Vec<String>,
    /// Environment-stream digest per trial index (identical for all agents).
    pub stream_checksums: Vec<String>,
}

/// `(mean, standard error)` with the sample standard deviation; SEM is 0 for
/// a single value.
pub fn mean_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn finals(trials: &[TrialRecord]) -> Vec<f64> {
    trials.iter().map(|t| t.trace.final_regret()).collect()
}

/// The environment for each trial index: one shared instance, or a fresh
/// draw per trial when the config asks for resampling.
pub fn build_environments(cfg: &ExperimentConfig) -> Result<Vec<Environment>> {
    if !cfg.resample_environment {
        return Ok(vec![cfg.environment.build(&cfg.base_dir)?]);
    }
    (0..cfg.trials)
        .map(|trial| cfg.environment.resampled(trial)?.build(&cfg.base_dir))
        .collect()
}

/// Runs every trial of one grid point. `envs` holds either one shared
/// environment or one per trial.
pub fn evaluate_point(
    cfg: &ExperimentConfig,
    envs: &[Environment],
    spec: &AgentSpec,
    point: &GridPoint,
) -> Result<Vec<TrialRecord>> {
    let opts = TrialOptions {
        rounds: cfg.rounds,
        update_every: cfg.update_every,
    };
    let results: Vec<Result<TrialRecord>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let env_seed = environment_seed(cfg.seed, trial);
            let env = if envs.len() == 1 {
                &envs[0]
            } else {
                &envs[trial]
            };
            let mut trial_env = env.clone();
            let mut agent = build_agent(
                spec,
                point,
                env,
                env_seed,
                agent_seed(cfg.seed, &spec.name, trial),
            )?;
            let out = run_trial(&mut trial_env, &mut agent, opts, env_seed).map_err(|source| {
                CliError::Trial {
                    agent: spec.name.clone(),
                    trial,
                    source,
                }
            })?;
            Ok(TrialRecord {
                trial,
                trace: out.trace,
                stream_checksum: out.stream_checksum,
            })
        })
        .collect();
    results.into_iter().collect()
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs each agent's single configuration and writes traces, summary and
/// manifest to `cfg.output`.
pub fn run_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    if let Some(spec) = cfg.agents.iter().find(|a| !a.is_single_point()) {
        return Err(CliError::invalid(format!(
            "agent {} has a multi-point grid; use `sweep` to search it",
            spec.name
        )));
    }
    let envs = build_environments(cfg)?;
    let mut outcome = ExperimentOutcome::default();
    with_pool(opts.jobs, || {
        for spec in &cfg.agents {
            let point = spec.points().map(|mut p| p.remove(0));
            match point.and_then(|p| evaluate_point(cfg, &envs, spec, &p).map(|t| (p, t))) {
                Ok((point, trials)) => outcome.agents.push(AgentOutcome {
                    name: spec.name.clone(),
                    params: point.label(),
                    point,
                    trials,
                }),
                Err(e) => outcome.failures.push(e),
            }
        }
    })?;
    finish(cfg, opts, outcome)
}

/// Evaluates every grid point (unset keys take the default search ranges),
/// keeps the point with the lowest mean final regret per agent (ties go to
/// the earlier point) and writes outputs as [`run_experiment`] does, plus
/// `sweep.csv` with every point's score.
pub fn grid_sweep(cfg: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let envs = build_environments(cfg)?;
    let mut outcome = ExperimentOutcome::default();
    with_pool(opts.jobs, || {
        for spec in &cfg.agents {
            let swept = spec.with_default_grids();
            let points = match swept.points() {
                Ok(p) => p,
                Err(e) => {
                    outcome.failures.push(e);
                    continue;
                }
            };
            let mut best: Option<(f64, AgentOutcome)> = None;
            let mut failed = None;
            for (i, point) in points.iter().enumerate() {
                let trials = match evaluate_point(cfg, &envs, &swept, point) {
                    Ok(t) => t,
                    Err(e) => {
                        failed = Some(e);
                        break;
                    }
                };
                let (mean, sem) = mean_sem(&finals(&trials));
                outcome.sweep.push(SweepRow {
                    agent: spec.name.clone(),
                    point: i,
                    params: point.label(),
                    mean_final_regret: mean,
                    sem,
                });
                if best.as_ref().is_none_or(|(m, _)| mean < *m) {
                    best = Some((
                        mean,
                        AgentOutcome {
                            name: spec.name.clone(),
                            point: point.clone(),
                            params: point.label(),
                            trials,
                        },
                    ));
                }
            }
            match (failed, best) {
                (Some(e), _) => outcome.failures.push(e),
                (None, Some((_, agent))) => outcome.agents.push(agent),
                (None, None) => {}
            }
        }
    })?;
    finish(cfg, opts, outcome)
}

fn finish(
    cfg: &ExperimentConfig,
    opts: RunOptions,
    mut outcome: ExperimentOutcome,
) -> Result<ExperimentOutcome> {
    // Seed fairness: every agent saw the same stream for a given trial index.
    let checksums: Vec<u64> = match outcome.agents.first() {
        Some(first) => first.trials.iter().map(|t| t.stream_checksum).collect(),
        None => Vec::new(),
    };
    for agent in &outcome.agents {
        let own: Vec<u64> = agent.trials.iter().map(|t| t.stream_checksum).collect();
        if own != checksums {
            return Err(CliError::invalid(format!(
                "agent {} saw a different environment stream than {}",
                agent.name, outcome.agents[0].name
            )));
        }
    }
    outcome.summary = outcome
        .agents
        .iter()
        .map(|a| {
            let (mean, sem) = mean_sem(&finals(&a.trials));
            SummaryRow {
                agent: a.name.clone(),
                mean_final_regret: mean,
                sem,
                trials: a.trials.len(),
                best_params: a.params.clone(),
            }
        })
        .collect();

    let mut files: Vec<(PathBuf, String)> = Vec::new();
    for agent in &outcome.agents {
        for t in &agent.trials {
            files.push((
                cfg.output.join(trace_file_name(&agent.name, t.trial)),
                trace_csv(&t.trace),
            ));
        }
    }
    files.push((
        cfg.output.join(SUMMARY_FILE),
        summary_csv(&outcome.summary)?,
    ));
    if !outcome.sweep.is_empty() {
        files.push((cfg.output.join(SWEEP_FILE), sweep_csv(&outcome.sweep)?));
    }
    let manifest = Manifest {
        environment: cfg.environment.label().to_string(),
        rounds: cfg.rounds,
        trials: cfg.trials,
        seed: cfg.seed,
        resample_environment: cfg.resample_environment,
        agents: outcome.agents.iter().map(|a| a.name.clone()).collect(),
        stream_checksums: checksums.iter().map(|c| format!("{c:016x}")).collect(),
    };
    let manifest = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::invalid(e.to_string()))?
        + "\n";
    files.push((cfg.output.join(MANIFEST_FILE), manifest));
    write_all(&cfg.output, &files, opts.force)?;
    Ok(outcome)
}

/// Filesystem-safe agent name.
pub fn file_stem(agent: &str) -> String {
    agent
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn trace_file_name(agent: &str, trial: usize) -> String {
    format!("trace_{}_{trial}.csv", file_stem(agent))
}

pub fn trace_csv(trace: &RegretTrace) -> String {
    let mut out =
        String::from("round,instantaneous_regret,cumulative_regret,action,oracle_action\n");
    for i in 0..trace.rounds() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            i + 1,
            trace.instantaneous()[i],
            trace.cumulative()[i],
            trace.chosen()[i],
            trace.oracle()[i]
        );
    }
    out
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| CliError::invalid(e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<String> {
    if rows.is_empty() {
        return Ok("agent,mean_final_regret,sem,trials,best_params\n".to_string());
    }
    to_csv(rows)
}

fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    to_csv(rows)
}

/// Writes every file, refusing (before touching anything) if an existing
/// file would change and `force` is off. Identical files are left alone.
pub fn write_all(dir: &Path, files: &[(PathBuf, String)], force: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut pending = Vec::new();
    for (path, content) in files {
        match fs::read(path) {
            Ok(existing) if existing == content.as_bytes() => continue,
            Ok(_) if !force => return Err(CliError::WouldOverwrite { path: path.clone() }),
            Ok(_) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(CliError::io(path, e)),
        }
        pending.push((path, content));
    }
    for (path, content) in pending {
        fs::write(path, content).map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_standard_error() {
        assert_eq!(mean_sem(&[4.0]), (4.0, 0.0));
        let (m, s) = mean_sem(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (1.666_666_666_666_666_7f64 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn file_stems_are_safe() {
        assert_eq!(file_stem("fbnn/full v2"), "fbnn_full_v2");
        assert_eq!(trace_file_name("bbb", 3), "trace_bbb_3.csv");
    }

    #[test]
    fn refuses_to_overwrite_different_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let files = vec![(path.clone(), "x\n".to_string())];
        write_all(dir.path(), &files, false).unwrap();
        write_all(dir.path(), &files, false).unwrap();
        let changed = vec![(path.clone(), "y\n".to_string())];
        assert!(matches!(
            write_all(dir.path(), &changed, false),
            Err(CliError::WouldOverwrite { .. })
        ));
        assert_eq!(fs::read_to_string(&path).unwrap(), "x\n");
        write_all(dir.path(), &changed, true).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "y\n");
    }
}
