//! `hysim`: simulations, convergence studies and navigation verification from
//! the command line. Every command writes its outputs next to a
//! `manifest.json` that `hysim rerun` replays.

mod commands;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{ConvergeArgs, SimulateArgs, VerifyNavArgs};

#[derive(Debug, Parser)]
#[command(name = "hysim", version, about = "Relaxation-based hybrid system simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one execution and write its trajectory.
    Simulate(SimulateArgs),
    /// Error table over a grid of step sizes and relaxation widths.
    Converge(ConvergeArgs),
    /// Sweep initial conditions of a navigation instance.
    VerifyNav(VerifyNavArgs),
    /// Replay the command recorded in a manifest.
    Rerun {
        manifest: std::path::PathBuf,
        /// Output directory; defaults to the one recorded in the manifest.
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
}

/// Exit status for usage, input and runtime errors.
const EXIT_ERROR: u8 = 1;

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("HYSIM_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| anyhow::anyhow!("HYSIM_THREADS must be a positive integer, got '{v}'"))?;
        if n == 0 {
            anyhow::bail!("HYSIM_THREADS must be a positive integer, got 0");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    configure_threads()?;
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Converge(a) => commands::converge(&a),
        Command::VerifyNav(a) => commands::verify_nav(&a),
        Command::Rerun { manifest, out } => commands::rerun(&manifest, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
