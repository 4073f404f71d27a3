//! `ppm`: train, evaluate and inspect PPM forecasters from config files.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 data error, 4 numeric
//! failure, 5 theory-check gate failure, 1 anything else.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ppm_core::PpmError;

use commands::{EvaluateArgs, ForecastArgs, SynthArgs};
use config::RunConfig;

pub const VERSION: &str = env!("PPM_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("theory check failed: {0}")]
    Gate(String),
}

#[derive(Parser, Debug)]
#[command(name = "ppm", version = VERSION, about = "Probabilistic forecasting with a learned prior and push-forward map")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Run config (TOML). Presets live in crates/cli/presets.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output` in the config.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Run seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset CSV; overrides `data.path` in the config.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write checkpoint, training log and echoed config.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Fix the prior scale to 1 (fixed-covariance ablation).
        #[arg(long)]
        fixed_unit_sigma: bool,
    },
    /// Score a checkpoint on the test split and write metrics and forecasts.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        /// Defaults to checkpoint.ppm in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Ensemble size at evaluation; overrides `eval.k_eval`.
        #[arg(long)]
        k_eval: Option<usize>,
        /// Write forecasts for every test window instead of one per horizon block.
        #[arg(long)]
        all_windows: bool,
        #[arg(long)]
        fixed_unit_sigma: bool,
    },
    /// Forecast the horizon after the last row of the dataset.
    Forecast {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        k_eval: Option<usize>,
        /// Channel drawn in the SVG.
        #[arg(long, default_value_t = 0)]
        channel: usize,
    },
    /// Write a synthetic series with a cycling noise level as CSV.
    Synth {
        #[arg(long, default_value_t = 4800)]
        rows: usize,
        #[arg(long, default_value_t = 1)]
        channels: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
        /// Also write the true noise scale per row.
        #[arg(long)]
        scale_output: Option<PathBuf>,
    },
    /// Run the KDE error scaling sweep and the push-forward fitting demo.
    TheoryCheck {
        #[command(flatten)]
        run: RunArgs,
        /// Write artifacts but never fail on the targets.
        #[arg(long)]
        no_gate: bool,
    },
}

fn load(run: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match &run.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::parse("")?,
    };
    if let Some(o) = &run.output {
        cfg.output = o.clone();
    }
    if let Some(s) = run.seed {
        cfg.seed = s;
    }
    if let Some(d) = &run.data {
        cfg.data.path = Some(d.clone());
        cfg.data.synth = None;
    }
    Ok(cfg.resolved())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { run, fixed_unit_sigma } => {
            let mut cfg = load(&run)?;
            if fixed_unit_sigma {
                cfg.model.fixed_sigma = Some(1.0);
            }
            commands::train(&cfg)
        }
        Command::Evaluate {
            run,
            checkpoint,
            k_eval,
            all_windows,
            fixed_unit_sigma,
        } => {
            let mut cfg = load(&run)?;
            if let Some(k) = k_eval {
                cfg.eval.k_eval = k;
            }
            if fixed_unit_sigma {
                cfg.model.fixed_sigma = Some(1.0);
            }
            commands::evaluate_cmd(&cfg, &EvaluateArgs { checkpoint, all_windows })
        }
        Command::Forecast {
            run,
            checkpoint,
            k_eval,
            channel,
        } => {
            let mut cfg = load(&run)?;
            if let Some(k) = k_eval {
                cfg.eval.k_eval = k;
            }
            commands::forecast(&cfg, &ForecastArgs { checkpoint, channel })
        }
        Command::Synth {
            rows,
            channels,
            seed,
            output,
            scale_output,
        } => commands::synth(&SynthArgs {
            rows,
            channels,
            seed,
            output,
            scale_output,
        }),
        Command::TheoryCheck { run, no_gate } => {
            let mut cfg = load(&run)?;
            if no_gate {
                cfg.theory.gate = false;
            }
            commands::theory_check(&cfg)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Usage(_) => 2,
                CliError::Gate(_) => 5,
            };
        }
        if let Some(e) = cause.downcast_ref::<PpmError>() {
            return match e {
                PpmError::Numeric { .. } | PpmError::NonFinite(_) => 4,
                PpmError::Data(_) | PpmError::Io { .. } | PpmError::Checkpoint(_) | PpmError::Empty(_) => 3,
                PpmError::Config(_) | PpmError::InvalidArgument(_) => 2,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("PPM_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("PPM_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
