mod commands;
mod config;
mod error;
mod simulate;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mqc_relax::estimation::{CurveKind, FitMode};
use mqc_relax::{CoherenceKind, Molecule};

use crate::commands::Format;
use crate::config::{Overrides, RunConfig, Settings, SystemSpec};
use crate::error::{CliError, CliResult};

/// Simulate, tomograph and fit relaxation of two-spin multiple-quantum coherences.
#[derive(Parser, Debug)]
#[command(name = "mqc-relax", version)]
struct Cli {
    /// JSON run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Molecule preset: btc, cytosine or coumarin
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Directory for output files (stdout when absent)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for simulated noise
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output format for `decay` and `report`
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Prepare a coherence, tomograph it and report the fidelity
    Prepare {
        /// ZQ, DQ, SQ1 or SQ2
        #[arg(long, default_value = "DQ")]
        target: CoherenceKind,
    },
    /// Simulate a decay curve on the configured time grid
    Decay {
        /// T1_spin1, T1_spin2, SQ1, SQ2, ZQ or DQ
        #[arg(long)]
        kind: CurveKind,
        /// Relative Gaussian noise on each sample
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Simulate readouts of a prepared state and reconstruct it
    Tomo {
        #[arg(long, default_value = "DQ")]
        target: CoherenceKind,
        /// Additive Gaussian noise on each observable
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Fit decay curves
    Fit {
        /// difference or joint
        #[arg(long, default_value = "difference")]
        mode: FitMode,
        /// Curve file as KIND=PATH; repeat for each curve
        #[arg(long = "curve", value_name = "KIND=PATH", required = true)]
        curves: Vec<String>,
    },
    /// Tabulate the correlated rate and consistency diagnostic for the presets
    Report,
}

fn settings(cli: &Cli, config: RunConfig, noise: Option<f64>) -> CliResult<Settings> {
    let mut config = config;
    if noise.is_some() {
        config.noise_level = noise;
    }
    Settings::resolve(
        config,
        Overrides {
            preset: cli.preset.clone(),
            out: cli.out.clone(),
            seed: cli.seed,
        },
    )
}

fn run(cli: Cli) -> CliResult<()> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::Prepare { target } => commands::prepare(&settings(&cli, config, None)?, *target),
        Command::Decay { kind, noise } => commands::decay(
            &settings(&cli, config, *noise)?,
            *kind,
            cli.format.unwrap_or(Format::Csv),
        ),
        Command::Tomo { target, noise } => commands::tomo(&settings(&cli, config, *noise)?, *target),
        Command::Fit { mode, curves } => commands::fit(&settings(&cli, config, None)?, *mode, curves),
        Command::Report => {
            let named = cli.preset.clone().or(match &config.system {
                Some(SystemSpec::Preset(name)) => Some(name.clone()),
                _ => None,
            });
            let molecules = match named {
                Some(name) => vec![name.parse::<Molecule>().map_err(CliError::config)?],
                None => Molecule::ALL.to_vec(),
            };
            let out = cli.out.clone().or(config.output.dir.clone());
            commands::report(&molecules, cli.format.unwrap_or(Format::Csv), out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::new()
        .filter_level(log::LevelFilter::Warn)
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
