use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fpbandit::data::{load_screen, prepare, PrepareOptions, ScreenPaths, DEFAULT_PCA_DIMS};
use fpbandit_cli::{
    grid_sweep, report, run_experiment, CliError, ExperimentConfig, ExperimentOutcome, RunOptions,
};

const CONFIG_HELP: &str = "\
CONFIG FILE (TOML):
  rounds = 2000                  # rounds per trial
  trials = 20                    # independent trials per agent
  seed = 7                       # base seed; per-trial seeds are derived from it
  output = \"results\"             # output directory (relative to the working dir)
  update_every = 30              # rounds between model updates

  [environment]
  kind = \"synthetic-nonlinear\"   # synthetic-linear | synthetic-nonlinear | tabular
  context_dim = 20
  drug_dim = 16
  actions = 10
  seed = 1
  # tabular: data_dir = \"screen\", prepare = true, pca_dims = 500, negate_response = false

  [[agents]]
  kind = \"fbnn\"                  # uniform | oracle | neural-greedy | bbb | dropout |
                                 # bootstrap | parameter-noise | fbnn
  name = \"fbnn\"                  # optional, defaults to the kind
  learning_rate = [1e-3, 1e-2]   # a list is a grid (searched by `sweep`)
  hidden = [64, 64]              # a list of lists is a grid over architectures

Unknown keys are rejected.";

#[derive(Parser)]
#[command(name = "fpbandit", version, about = "Contextual-bandit experiments for drug response", after_help = CONFIG_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Override the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the number of rounds.
    #[arg(long)]
    rounds: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite existing outputs whose contents differ.
    #[arg(long)]
    force: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured agent with its single parameter setting.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Grid-search each agent's parameters and report the best point.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Aggregate a finished run directory into per-round regret curves.
    Report {
        dir: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Filter, project and scale a raw screen directory.
    Prepare {
        data_dir: PathBuf,
        /// Where the prepared screen is written.
        #[arg(long)]
        out: PathBuf,
        /// Principal components kept for the cell-line contexts.
        #[arg(long, default_value_t = DEFAULT_PCA_DIMS)]
        dims: usize,
        /// Negate responses before scaling (for "lower is better" measures).
        #[arg(long)]
        negate_response: bool,
    },
}

fn load(config: &Path, o: &Overrides) -> Result<(ExperimentConfig, RunOptions), CliError> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = o.trials {
        cfg.trials = trials;
    }
    if let Some(rounds) = o.rounds {
        cfg.rounds = rounds;
    }
    if let Some(out) = &o.out {
        cfg.output = out.clone();
    }
    cfg.validate()?;
    Ok((
        cfg,
        RunOptions {
            force: o.force,
            jobs: o.jobs,
        },
    ))
}

fn print_outcome(cfg: &ExperimentConfig, outcome: &ExperimentOutcome) -> bool {
    println!(
        "{:<24} {:>14} {:>10} {:>7}  params",
        "agent", "final regret", "sem", "trials"
    );
    for row in &outcome.summary {
        println!(
            "{:<24} {:>14.3} {:>10.3} {:>7}  {}",
            row.agent, row.mean_final_regret, row.sem, row.trials, row.best_params
        );
    }
    println!("outputs in {}", cfg.output.display());
    for failure in &outcome.failures {
        eprintln!("error: {failure}");
    }
    outcome.failures.is_empty()
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Run { config, overrides } => {
            let (cfg, opts) = load(&config, &overrides)?;
            let outcome = run_experiment(&cfg, opts)?;
            Ok(print_outcome(&cfg, &outcome))
        }
        Command::Sweep { config, overrides } => {
            let (cfg, opts) = load(&config, &overrides)?;
            let outcome = grid_sweep(&cfg, opts)?;
            Ok(print_outcome(&cfg, &outcome))
        }
        Command::Report { dir, force } => {
            let (path, _) = report(&dir, force)?;
            println!("wrote {}", path.display());
            Ok(true)
        }
        Command::Prepare {
            data_dir,
            out,
            dims,
            negate_response,
        } => {
            let raw = load_screen(&ScreenPaths::in_dir(&data_dir))?;
            let prepared = prepare(
                &raw,
                PrepareOptions {
                    dims,
                    negate_response,
                },
            )?;
            prepared.write(&out)?;
            let p = &prepared.provenance;
            println!(
                "{} cell lines × {} components, {} drugs (dropped {} cells, {} drugs) → {}",
                prepared.cell_ids.len(),
                p.components,
                prepared.drug_ids.len(),
                p.dropped_cells.len(),
                p.dropped_drugs.len(),
                out.display()
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
