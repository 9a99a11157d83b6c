//! Command line front end: `run`, `fit` and `calibrate`.
//!
//! Exit codes: 0 success, 1 i/o failure, 2 configuration error,
//! 3 insufficient data for a fit.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hinted_lqr::harness::{
    calibrate::{calibrate, radius_grid},
    config::preset,
    run::{fit_directory, run_experiment, RunOptions},
    ExperimentConfig, HarnessError,
};

#[derive(Parser)]
#[command(name = "hinted-lqr", version, about = "Adaptive LQR with hints: experiments and fits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seed sweep over the horizons of a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Also write full trajectories.
        #[arg(long)]
        traj_dump: bool,
    },
    /// Re-fit regret growth from a previous run directory.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Estimate the sensitivity constants of a preset plant.
    Calibrate {
        #[arg(long)]
        preset: String,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config, out, workers, traj_dump } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", config.display())))?;
            let cfg = ExperimentConfig::from_json(&text)?.with_env_overrides()?;
            let out_dir = out.or_else(|| cfg.output_dir.clone().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
            let opts = RunOptions { out_dir: Some(out_dir.clone()), workers, traj_dump };
            let result = run_experiment(cfg, &opts)?;
            let text = serde_json::to_string_pretty(&result.summary).map_err(|e| HarnessError::Io(e.to_string()))?;
            println!("{text}");
            eprintln!("wrote {}", out_dir.display());
            Ok(())
        }
        Command::Fit { input } => {
            let fit = fit_directory(&input)?;
            println!("{}", serde_json::to_string_pretty(&fit).map_err(|e| HarnessError::Io(e.to_string()))?);
            Ok(())
        }
        Command::Calibrate { preset: name, samples, seed } => {
            let plant = preset(&name)?;
            let cal = calibrate(&plant.truth, &radius_grid(0.0125, 1.6, 2.0), samples, seed)?;
            println!("{}", serde_json::to_string_pretty(&cal).map_err(|e| HarnessError::Io(e.to_string()))?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
