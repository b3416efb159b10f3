//! Aggregation of a finished run directory into per-round mean regret curves.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::experiment::{
    mean_sem, trace_file_name, write_all, Manifest, SummaryRow, MANIFEST_FILE, SUMMARY_FILE,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub agent: String,
    pub round: usize,
    pub mean_cumulative_regret: f64,
    pub sem: f64,
    pub trials: usize,
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    round: usize,
    #[allow(dead_code)]
    instantaneous_regret: f64,
    cumulative_regret: f64,
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let csv_err = |e: csv::Error| CliError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    reader
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(csv_err)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config {
        path,
        message: e.to_string(),
    })
}

/// Cumulative-regret curves `[trial][round]` for one agent.
pub fn read_curves(dir: &Path, agent: &str, trials: usize) -> Result<Vec<Vec<f64>>> {
    (0..trials)
        .map(|trial| {
            let path = dir.join(trace_file_name(agent, trial));
            let rows: Vec<TraceRow> = read_csv(&path)?;
            if rows.iter().enumerate().any(|(i, r)| r.round != i + 1) {
                return Err(CliError::Csv {
                    path,
                    message: "rounds are not numbered 1..T".into(),
                });
            }
            Ok(rows.into_iter().map(|r| r.cumulative_regret).collect())
        })
        .collect()
}

/// Aggregates every agent of the run in `dir`, checks `summary.csv` against
/// the traces and writes `aggregate_<environment>.csv`. Returns the path
/// written.
pub fn report(dir: &Path, force: bool) -> Result<(PathBuf, Vec<AggregateRow>)> {
    let manifest = read_manifest(dir)?;
    let summary: Vec<SummaryRow> = read_csv(&dir.join(SUMMARY_FILE))?;
    let mut rows = Vec::new();
    for agent in &manifest.agents {
        let curves = read_curves(dir, agent, manifest.trials)?;
        if curves.iter().any(|c| c.len() != manifest.rounds) {
            return Err(CliError::invalid(format!(
                "agent {agent}: trace length differs from {} rounds",
                manifest.rounds
            )));
        }
        let finals: Vec<f64> = curves.iter().map(|c| c[c.len() - 1]).collect();
        let (mean, _) = mean_sem(&finals);
        let listed = summary.iter().find(|s| &s.agent == agent).ok_or_else(|| {
            CliError::invalid(format!("agent {agent} is missing from {SUMMARY_FILE}"))
        })?;
        if (listed.mean_final_regret - mean).abs() > 1e-9 * mean.abs().max(1.0) {
            return Err(CliError::invalid(format!(
                "agent {agent}: summary mean {} disagrees with traces ({mean})",
                listed.mean_final_regret
            )));
        }
        for round in 0..manifest.rounds {
            let column: Vec<f64> = curves.iter().map(|c| c[round]).collect();
            let (mean, sem) = mean_sem(&column);
            rows.push(AggregateRow {
                agent: agent.clone(),
                round: round + 1,
                mean_cumulative_regret: mean,
                sem,
                trials: manifest.trials,
            });
        }
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        writer
            .serialize(row)
            .map_err(|e| CliError::invalid(e.to_string()))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::invalid(e.to_string()))?;
    let path = dir.join(format!("aggregate_{}.csv", manifest.environment));
    let content = String::from_utf8(bytes).expect("csv output is UTF-8");
    write_all(dir, &[(path.clone(), content)], force)?;
    Ok((path, rows))
}
