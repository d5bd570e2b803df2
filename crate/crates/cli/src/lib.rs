//! Command-line front end: `tcs index | sim | select | stats`.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{Reporter, SelectArgs, PLAN_FILE};
use crate::config::{Overrides, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "tcs",
    version,
    about = "Target-conditioned sampling over multi-parallel corpora"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// No progress or report output.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest the corpus and write the candidate index.
    Index,
    /// Score every candidate and write the similarity table.
    Sim {
        /// Overrides the configured measure (vocab-lang, vocab-sent, lm-lang, lm-sent).
        #[arg(long)]
        measure: Option<String>,
    },
    /// Build the sampling plan and write the selected epochs.
    Select {
        #[arg(long)]
        measure: Option<String>,
        #[arg(long)]
        tau: Option<f64>,
        /// deterministic or stochastic.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        epochs: Option<u64>,
        /// Read scores from this table instead of `<out>/similarity.tsv`.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Write one plan and selection per tau in {0.01, 0.02, 0.1} under `tau-<tau>/`.
        #[arg(long)]
        sweep_tau: bool,
    },
    /// Summarize a plan dump.
    Stats {
        /// Plan dump; defaults to `<out>/plan.txt`.
        plan: Option<PathBuf>,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
}

fn load_config(global: &GlobalArgs, overrides: Overrides) -> Result<RunConfig, CliError> {
    let path = global
        .config
        .as_deref()
        .ok_or_else(|| CliError::Validation("--config is required".into()))?;
    RunConfig::load(path, &overrides)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    let rep = Reporter { quiet: g.quiet };
    let base = Overrides {
        seed: g.seed,
        out: g.out.clone(),
        ..Default::default()
    };
    match cli.command {
        Command::Index => commands::cmd_index(&load_config(g, base)?, rep),
        Command::Sim { measure } => {
            let cfg = load_config(g, Overrides { measure, ..base })?;
            commands::cmd_sim(&cfg, rep)
        }
        Command::Select {
            measure,
            tau,
            mode,
            epochs,
            table,
            sweep_tau,
        } => {
            let cfg = load_config(
                g,
                Overrides {
                    measure,
                    tau,
                    mode,
                    epochs,
                    ..base
                },
            )?;
            commands::cmd_select(&cfg, &SelectArgs { table, sweep_tau }, rep)
        }
        Command::Stats { plan, json } => {
            let path = match (plan, &g.out, &g.config) {
                (Some(p), _, _) => p,
                (None, Some(out), _) => out.join(PLAN_FILE),
                (None, None, Some(_)) => load_config(g, base)?.out_dir.join(PLAN_FILE),
                (None, None, None) => {
                    return Err(CliError::Validation(
                        "stats needs a plan path, --out or --config".into(),
                    ))
                }
            };
            print!("{}", commands::cmd_stats(&path, json)?);
            Ok(())
        }
    }
}
