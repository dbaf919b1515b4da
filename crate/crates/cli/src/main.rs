//! `tickvol`: simulate, clean, estimate and validate from the command line.
//!
//! Exit codes: 0 success, 1 a validation band failed, 2 bad input or config.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "tickvol", version, about = "Spot volatility from tick data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a tick series from a TOML model config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Clean a raw `timestamp,price,condition` file into a series CSV.
    Clean {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TOML with session bounds, bad condition codes and the outlier filter.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where to write the JSON cleaning report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Estimate curves on a grid and write one CSV per estimator.
    Estimate {
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: EstimateOverrides,
    },
    /// Run Monte Carlo scenarios from a registry and check their bands.
    Validate {
        /// Scenario registry (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Scenario names; `--all` runs every scenario.
        names: Vec<String>,
        #[arg(long)]
        all: bool,
        /// Directory for per-scenario JSON reports.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides every scenario's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Where to write the JSON pass/fail summary.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Debug, Default, Args)]
pub struct EstimateOverrides {
    #[arg(long)]
    grid_points: Option<usize>,
    /// Clock-time bandwidth as a fraction of the horizon.
    #[arg(long)]
    bandwidth_clock: Option<f64>,
    /// Intensity bandwidth as a fraction of the horizon.
    #[arg(long)]
    bandwidth_intensity: Option<f64>,
    #[arg(long)]
    tick_window: Option<usize>,
    #[arg(long)]
    block_size: Option<usize>,
    /// Floor applied before taking logs in the `log_value` column.
    #[arg(long)]
    log_floor: Option<f64>,
}

fn configure_threads() {
    if let Some(n) = std::env::var("TICKVOL_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let result = match cli.command {
        Command::Simulate { config, out, seed } => commands::simulate(&config, &out, seed),
        Command::Clean {
            input,
            out,
            config,
            report,
        } => commands::clean(&input, &out, config.as_deref(), report.as_deref()),
        Command::Estimate {
            input,
            out,
            config,
            overrides,
        } => commands::estimate(&input, &out, config.as_deref(), &overrides),
        Command::Validate {
            config,
            names,
            all,
            out,
            seed,
            report,
        } => commands::validate(&config, &names, all, out.as_deref(), seed, report.as_deref()),
    };
    match result {
        Ok(commands::Outcome::Success) => ExitCode::SUCCESS,
        Ok(commands::Outcome::ValidationFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
