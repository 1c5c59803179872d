//! atomopt: relax disordered atomic structures with classical minimizers
//! and a graph policy-gradient optimizer.
//!
//! Exit codes: 0 success, 2 configuration/input error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use atomopt_cli::commands::{self, Ctx};
use atomopt_cli::config::{parse_override, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "atomopt",
    about = "Structure optimization on rough energy landscapes",
    after_long_help = config_help(),
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn config_help() -> String {
    ExperimentConfig::help_text()
}

#[derive(Args)]
struct Common {
    /// Config file (key = value under [section] headers)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for all random streams
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Run directory for outputs
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,

    /// Worker threads for structure-level parallelism (1 = fully serial)
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Override a config key: --set section.key=value (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample high-energy structures by packing + NVT dynamics
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Minimize structures with gd, adam or fire
    Minimize {
        #[command(flatten)]
        common: Common,
        /// Input .xyz file or directory of .xyz files
        #[arg(long)]
        input: PathBuf,
    },
    /// Train the displacement policy on a dataset of structures
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory of .xyz training structures
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Adapt a trained policy to one target structure
    Adapt {
        #[command(flatten)]
        common: Common,
        /// Policy checkpoint
        #[arg(long)]
        checkpoint: PathBuf,
        /// Target .xyz structure
        #[arg(long)]
        target: PathBuf,
    },
    /// Classical minimizers (and optionally policy adaptation) on held-out structures
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Policy checkpoint for the adaptation rows (omit for classical-only)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Adapt one checkpoint across system sizes (per-atom energy table)
    Inductivity {
        #[command(flatten)]
        common: Common,
        /// Policy checkpoint trained at one size
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn build_ctx(common: &Common) -> Result<Ctx> {
    let overrides: Vec<(String, String)> = common
        .sets
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<_>>()?;
    let cfg = ExperimentConfig::load(common.config.as_deref(), &overrides)?;
    Ctx::new(cfg, &common.out, common.seed, common.threads)
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Generate { common } => commands::cmd_generate(&build_ctx(common)?),
        Command::Minimize { common, input } => commands::cmd_minimize(&build_ctx(common)?, input),
        Command::Train { common, dataset } => commands::cmd_train(&build_ctx(common)?, dataset),
        Command::Adapt {
            common,
            checkpoint,
            target,
        } => commands::cmd_adapt(&build_ctx(common)?, checkpoint, target),
        Command::Benchmark { common, checkpoint } => {
            commands::cmd_benchmark(&build_ctx(common)?, checkpoint.as_deref())
        }
        Command::Inductivity { common, checkpoint } => {
            commands::cmd_inductivity(&build_ctx(common)?, checkpoint)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = classify(&err);
            ExitCode::from(code)
        }
    }
}

/// 3 for numerical failures, 2 for config/input problems.
fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core_err) = cause.downcast_ref::<atomopt_core::Error>() {
            return match core_err {
                atomopt_core::Error::NonFiniteEnergy(_)
                | atomopt_core::Error::EnergyDiverged(_)
                | atomopt_core::Error::PackingFailure { .. } => 3,
                _ => 2,
            };
        }
    }
    2
}
