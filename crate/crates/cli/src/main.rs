use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;
mod input;

/// Phase dynamics unwinding of sampled signals.
#[derive(Debug, Parser)]
#[command(name = "pdu", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decompose a CSV signal into AM-FM components.
    Decompose(commands::DecomposeArgs),
    /// Write one AHM realization with its ground truth.
    Simulate(commands::SimulateArgs),
    /// Score methods over seeded realizations and test them pairwise.
    Benchmark(commands::BenchmarkArgs),
    /// Map small-magnitude regions of a windowed signal's disk extension.
    Rootmap(commands::RootmapArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Decompose(a) => commands::decompose(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Benchmark(a) => commands::benchmark(a),
        Command::Rootmap(a) => commands::rootmap(a).map(|_| ()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
