//! `ids-pipeline`: preprocess, train, detect and evaluate.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime failure, 3 model and
//! config hash mismatch. `ANOMALY_PIPELINE_LOG` sets log verbosity (default
//! `info`).

mod commands;
mod config;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Context;
use crate::error::{CliError, ResultExt};

#[derive(Parser)]
#[command(name = "ids-pipeline", version, about = "Autoencoder + isolation-forest intrusion detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode and scale the raw train/test CSVs.
    Preprocess(Common),
    /// Train both autoencoders on normal records and fit the threshold.
    Train(Common),
    /// Score the test set and write per-record verdicts.
    Detect(Common),
    /// Compute metrics, ROC and report files from the verdicts.
    Evaluate(Common),
    /// All four commands in order.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// Run config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 gives bit-exact reproducibility.
    #[arg(long)]
    threads: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

fn run(command: Command) -> Result<(), CliError> {
    let (common, steps): (Common, &[fn(&Context) -> Result<(), CliError>]) = match command {
        Command::Preprocess(c) => (c, &[commands::preprocess]),
        Command::Train(c) => (c, &[commands::train]),
        Command::Detect(c) => (c, &[commands::detect_cmd]),
        Command::Evaluate(c) => (c, &[commands::evaluate]),
        Command::Run(c) => (
            c,
            &[commands::preprocess, commands::train, commands::detect_cmd, commands::evaluate],
        ),
    };
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::validation("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .or_runtime("configuring thread pool")?;
    }
    let loaded = config::load(&common.config, common.seed, common.out.as_deref())?;
    let ctx = Context {
        loaded,
        force: common.force,
    };
    steps.iter().try_for_each(|step| step(&ctx))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ANOMALY_PIPELINE_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
