use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use chmhd::{error_kind, parse_config, preset_with_overrides, ExperimentKind, RunConfig};
use clap::{Parser, Subcommand};

/// Diffuse-interface two-phase MHD simulations.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// `section.key=value`, applied on top of the file.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Manufactured-solution convergence study.
    Converge {
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Spinodal decomposition with a time-step sweep.
    Spinodal {
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Rising bubble under gravity in a vertical magnetic field.
    Bubble {
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn resolve(cmd: Command) -> Result<RunConfig> {
    match cmd {
        Command::Run { config, overrides } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("cannot read {}", config.display()))?;
            parse_config(&text, &overrides).with_context(|| format!("in {}", config.display()))
        }
        Command::Converge { overrides } => preset_with_overrides(ExperimentKind::Converge, &overrides),
        Command::Spinodal { overrides } => preset_with_overrides(ExperimentKind::Spinodal, &overrides),
        Command::Bubble { overrides } => preset_with_overrides(ExperimentKind::Bubble, &overrides),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = resolve(cli.command).and_then(|cfg| {
        chmhd::run(&cfg)?;
        log::info!("outputs written to {}", cfg.output.directory.display());
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = format!("{e:#}").replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
            eprintln!("error: kind={} message=\"{message}\"", error_kind(&e));
            ExitCode::FAILURE
        }
    }
}
