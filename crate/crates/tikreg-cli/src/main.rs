//! Command-line driver: risk evaluation, decay sweeps, reconstructions,
//! moment concentration and Haar transforms.
//!
//! Exit codes: 0 on success, 1 on numerical failure, 2 on configuration
//! errors (including usage errors reported by the parser itself).

mod commands;
mod config;
mod output;
mod plot;

use clap::{Parser, Subcommand};

const CONFIG_KEYS_HELP: &str = "Config file keys (sectioned key = value text):
  [experiment]  case = \"a\" | \"b\" | \"c\"     noise case
                grid_sizes = [64, 256]      discretization sizes N
                sample_sizes = [3000, ...]  training sizes m, increasing
                reps = 30                   repetitions per (N, m) cell
                master_seed = 1             seed of the whole sweep
                sigma = 0.05                white-noise level
                parallel = true             distribute cells over threads
  [prior]       kind = \"bump\" | \"laplacian\"
                kernel_c = 0.2              bump kernel radius, in (0, 1/2]
                smoothness = 1.0            laplacian exponent, > 1/2
  [forward]     kind = \"identity\" | \"blur\"
                width = 0.05                blur kernel width

Flags override file values. Unknown keys are rejected by name.";

/// Optimal regularizers for linear inverse problems: closed-form risks,
/// learned reconstructors and excess-risk decay experiments.
#[derive(Parser)]
#[command(name = "tikreg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the minimal expected risk; evaluate a pair file against it.
    Risk(commands::RiskArgs),
    /// Excess-risk decay experiment; writes sweep.csv, summary.csv, decay.svg.
    #[command(after_help = CONFIG_KEYS_HELP)]
    Sweep(commands::SweepArgs),
    /// Draw one signal and datum, reconstruct it; writes signals.csv.
    Reconstruct(commands::ReconstructArgs),
    /// Decay of empirical prior-moment errors; writes concentration.csv.
    Concentration(commands::ConcentrationArgs),
    /// Orthonormal Haar analysis or synthesis of a CSV column, to stdout.
    Transform(commands::TransformArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Risk(args) => commands::cmd_risk(args),
        Command::Sweep(args) => commands::cmd_sweep(args),
        Command::Reconstruct(args) => commands::cmd_reconstruct(args),
        Command::Concentration(args) => commands::cmd_concentration(args),
        Command::Transform(args) => commands::cmd_transform(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(if e.is_config() { 2 } else { 1 });
    }
}
