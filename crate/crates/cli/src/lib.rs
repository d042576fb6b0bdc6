//! Batch front-end for `mfctrl`: experiment configs, the three controller
//! cases, CSV/SVG emission and trace analysis.

pub mod commands;
pub mod config;
pub mod plot;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use mfctrl::Error;

/// Exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_PRECONDITION: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible { .. } => EXIT_INFEASIBLE,
        Error::Numerical(_) | Error::StepOverflow(_) | Error::InteriorViolation { .. } => EXIT_NUMERICAL,
        _ => EXIT_PRECONDITION,
    }
}

#[derive(Debug, Parser)]
#[command(name = "mfctrl", version, about = "Mean-field control of robotic swarms on graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed; runs use seed, seed + 1, ...
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of stochastic runs.
    #[arg(long)]
    pub runs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Open-loop steering from x0 to xeq over the horizon.
    Steer(Common),
    /// Structured LMI synthesis of a decentralized gain.
    Synth(Common),
    /// Mean-field and agent-level simulation of the configured controller.
    Simulate(Common),
    /// Report on agent traces (defaults to <out>/traces/*.csv).
    Analyze {
        #[command(flatten)]
        common: Common,
        traces: Vec<PathBuf>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Steer(c) | Command::Synth(c) | Command::Simulate(c) => c,
            Command::Analyze { common, .. } => common,
        }
    }
}

pub fn run(cli: &Cli) -> mfctrl::Result<serde_json::Value> {
    let c = cli.command.common();
    let overrides = config::Overrides { out: c.out.clone(), seed: c.seed, runs: c.runs };
    let cfg = config::ExperimentConfig::load(&c.config, &overrides)?;
    match &cli.command {
        Command::Steer(_) => commands::steer(&cfg),
        Command::Synth(_) => commands::synth(&cfg),
        Command::Simulate(_) => commands::simulate(&cfg),
        Command::Analyze { traces, .. } => {
            let paths = if traces.is_empty() { commands::default_traces(&cfg)? } else { traces.clone() };
            commands::analyze(&cfg, &paths)
        }
    }
}
