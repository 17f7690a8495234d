use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use explore_go::config::RunConfig;
use explore_go::experiment;
use explore_go::plot::{self, GroupBy};

/// Explore-Go experiments on the Illustrative Cross and Four Rooms.
#[derive(Parser)]
#[command(name = "explore-go", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one seed; writes config.json, seed_<n>.csv and checkpoint_seed_<n>.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the config once per (K, seed) with Explore-Go enabled and summarise
    /// final test performance per K.
    SweepK {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated list, e.g. 25,50,100.
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<usize>,
        /// Number of seeds (0..n).
        #[arg(long)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump reachable-set sizes, a V* histogram and context reachability as JSON.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plot one metric from metrics CSVs. Curves show the mean over seeds with
    /// a 95% band of 1.96 standard errors; test splits are dashed.
    Plot {
        /// Glob matching metrics CSV files.
        #[arg(long = "in")]
        input: String,
        #[arg(long)]
        metric: String,
        /// `dir` (parent directory name), `file` (file stem), or a dotted
        /// config key read from the config.json next to each CSV.
        #[arg(long, default_value = "dir")]
        group_by: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(path: &PathBuf) -> Result<RunConfig> {
    RunConfig::from_path(path).with_context(|| format!("invalid config {}", path.display()))
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Run { config, seed, out } => {
            let cfg = load(&config)?;
            let outcome = experiment::run(&cfg, seed, &out)?;
            eprintln!("trained {} steps; results in {}", outcome.steps, out.display());
        }
        Cmd::SweepK { config, k, seeds, out } => {
            let cfg = load(&config)?;
            experiment::sweep_k(&cfg, &k, seeds, &out)?;
            eprintln!("sweep written to {}", out.display());
        }
        Cmd::Oracle { config, out } => {
            let cfg = load(&config)?;
            let r = experiment::write_oracle_report(&cfg, &out)?;
            eprintln!(
                "{} reachable states ({} non-terminal); report in {}",
                r.reachable_states,
                r.non_terminal_states,
                out.display()
            );
        }
        Cmd::Plot { input, metric, group_by, out } => {
            plot::plot(&input, &metric, &GroupBy::parse(&group_by), &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
