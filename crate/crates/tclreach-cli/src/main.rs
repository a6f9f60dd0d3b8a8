//! `tclreach`: scenario runner for TCL fleet reach-and-hold studies.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{Failure, Preset, Run};

#[derive(Debug, Parser)]
#[command(name = "tclreach", version, about = "Markov fleet models and reach-and-hold sets for thermostatic loads")]
struct Cli {
    /// Scenario config (JSON). Seeds must be given explicitly.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Directory for every emitted file.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Reach-and-hold methods, comma separated.
    #[arg(long, global = true, value_delimiter = ',', default_value = "inner,outer")]
    methods: Vec<String>,

    /// Figure-keyed output set: fig2, fig4, fig5, fig6 or fig7.
    #[arg(long, global = true, value_name = "figN")]
    preset: Option<String>,

    /// Replace every seed in the config.
    #[arg(long, global = true, value_name = "N")]
    seed_override: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Subcommand)]
enum Command {
    /// Estimate A and A_a (A_out with --methods outer), x0 and P_nom.
    BuildModel,
    /// Inner, outer and exact reach-and-hold frontiers plus the outer condition scan.
    Reachhold,
    /// Combine saved frontiers (paths here or `aggregate.inputs` in the config).
    Aggregate {
        #[arg(value_name = "CSV")]
        sets: Vec<PathBuf>,
    },
    /// Apply Markov plans to the agent-based fleet and score the agreement.
    Validate,
    /// Inner frontiers for each setpoint in `sweep.setpoints`.
    SweepSetpoint,
    /// Inner frontiers with and without pre-cooling.
    SweepPrecool,
    /// Invariant suite.
    Selfcheck,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::BuildModel => "build-model",
            Command::Reachhold => "reachhold",
            Command::Aggregate { .. } => "aggregate",
            Command::Validate => "validate",
            Command::SweepSetpoint => "sweep-setpoint",
            Command::SweepPrecool => "sweep-precool",
            Command::Selfcheck => "selfcheck",
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let preset = cli.preset.as_deref().map(|p| Preset::parse(p, cli.command.name())).transpose()?;
    let path = cli.config.ok_or_else(|| Failure::Config("--config PATH is required".into()))?;
    let run = Run::prepare(&path, cli.out, &cli.methods, preset, cli.seed_override)?;
    match cli.command {
        Command::BuildModel => run.build_model(),
        Command::Reachhold => run.reachhold(),
        Command::Aggregate { sets } => run.aggregate(sets),
        Command::Validate => run.validate(),
        Command::SweepSetpoint => run.sweep_setpoint(),
        Command::SweepPrecool => run.sweep_precool(),
        Command::Selfcheck => run.selfcheck(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("tclreach: {f}");
            ExitCode::from(f.code())
        }
    }
}
