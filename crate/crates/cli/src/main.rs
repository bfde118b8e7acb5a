//! `wsiqpi` command-line front end.

mod calibrate;
mod common;
mod eval;
mod patch;
mod reconstruct;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "wsiqpi", version, about = "Quantitative phase reconstruction for lateral-shear holograms and whole-slide mosaics")]
struct Cli {
    /// Pipeline configuration (JSON); missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for synthetic detector noise.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a hologram, its ground truth and a cell mask from a phantom spec.
    Synth(synth::Args),
    /// Reconstruct phase and optical height from a hologram or a tile mosaic.
    Reconstruct(reconstruct::Args),
    /// Assemble the tiles of a mosaic manifest into one container.
    Patch(patch::Args),
    /// Compute masked error metrics and write a CSV report.
    Eval(eval::Args),
    /// Build a calibration frame from an object-free hologram.
    Calibrate(calibrate::Args),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        anyhow::ensure!(n > 0, wsiqpi::Error::Parameter("--threads must be positive".into()));
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cfg = common::load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => synth::run(&a, &cfg, cli.seed),
        Command::Reconstruct(a) => reconstruct::run(&a, &cfg),
        Command::Patch(a) => patch::run(&a),
        Command::Eval(a) => eval::run(&a, &cfg),
        Command::Calibrate(a) => calibrate::run(&a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(common::exit_code(&err))
        }
    }
}
