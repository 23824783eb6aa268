use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sensorfault_cli::commands::{self, Run, SensitivityMode};
use sensorfault_cli::config::{RunConfig, Seed};
use sensorfault_cli::CliError;

/// Sensor-fault robustness evaluation for time-series forecasters.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Evaluation seed override (decimal or 0x hex).
    #[arg(long, value_parser = Seed::parse)]
    eval_seed: Option<Seed>,
    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Load the dataset and report its shape and window counts.
    Validate(Common),
    /// Select, fit and score one model on the test split.
    Evaluate(Common),
    /// Pair each configured method against the baseline.
    Compare(Common),
    /// Re-run under alternative seeds, channel rules or selectors.
    Sensitivity {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: SensitivityMode,
    },
}

fn prepare(c: Common) -> Result<Run, CliError> {
    let mut cfg = RunConfig::load(&c.config)?;
    if let Some(out) = c.out {
        cfg.out = Some(out);
    }
    if let Some(seed) = c.eval_seed {
        cfg.eval.seed = Some(seed);
    }
    cfg.resolve();
    Ok(Run {
        cfg,
        workers: c.workers,
        quiet: c.quiet,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(c) => prepare(c).and_then(|r| commands::validate(&r)),
        Command::Evaluate(c) => prepare(c).and_then(|r| commands::evaluate_cmd(&r)),
        Command::Compare(c) => prepare(c).and_then(|r| commands::compare(&r)),
        Command::Sensitivity { common, mode } => {
            prepare(common).and_then(|r| commands::sensitivity(&r, mode))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
