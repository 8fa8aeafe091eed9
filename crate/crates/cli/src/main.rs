//! Command-line front end. Every subcommand reads one JSON scenario,
//! runs the corresponding mode, and writes its outputs under --out.

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Mode;
use run::{CliError, Invocation};

#[derive(Parser)]
#[command(
    name = "csma-sleep",
    version,
    about = "Sleep-enabled CSMA: exact analysis, convex parameter selection, \
             simulation, and baseline comparisons"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Also write an event trace (trace.csv).
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Scenario file (JSON); the canonical twelve-link scenario when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Also write an event trace (trace.csv).
    #[arg(long)]
    trace: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Exact stationary analysis at fixed aggressiveness parameters.
    Analyze(RunArgs),
    /// Optimal aggressiveness for a load and awake-fraction target.
    Optimize(RunArgs),
    /// Continuous-time run, with online adaptation when configured.
    Simulate(RunArgs),
    /// Mini-slot contention run of the sleep-enabled scheme.
    Slotted(RunArgs),
    /// Saturated 802.11 DCF baseline with an optional window sweep.
    Dcf(RunArgs),
    /// Throughput, energy, and collision comparison across schemes.
    Compare(RunArgs),
    /// Capacity-region boundary and awake-fraction box as CSV.
    Region(RunArgs),
    /// Canonical twelve-link adaptation run.
    Experiment(ExperimentArgs),
}

impl Command {
    fn invocation(self) -> Invocation {
        let (mode, config, seed, out, trace) = match self {
            Command::Analyze(a) => (Mode::Analyze, Some(a.config), a.seed, a.out, a.trace),
            Command::Optimize(a) => (Mode::Optimize, Some(a.config), a.seed, a.out, a.trace),
            Command::Simulate(a) => (Mode::Simulate, Some(a.config), a.seed, a.out, a.trace),
            Command::Slotted(a) => (Mode::Slotted, Some(a.config), a.seed, a.out, a.trace),
            Command::Dcf(a) => (Mode::Dcf, Some(a.config), a.seed, a.out, a.trace),
            Command::Compare(a) => (Mode::Compare, Some(a.config), a.seed, a.out, a.trace),
            Command::Region(a) => (Mode::Region, Some(a.config), a.seed, a.out, a.trace),
            Command::Experiment(a) => (Mode::Experiment, a.config, a.seed, a.out, a.trace),
        };
        Invocation { mode, config, seed, out, trace }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run::execute(&cli.command.invocation()) {
        Ok(files) => {
            for file in files {
                println!("wrote {}", file.display());
            }
            ExitCode::SUCCESS
        }
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(1)
        }
    }
}
