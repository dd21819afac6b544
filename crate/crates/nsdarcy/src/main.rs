//! Command line driver: single solves, uniform convergence studies and
//! adaptive runs, all described by a TOML configuration file.

use clap::{Args, Parser, Subcommand};
use nsdarcy::estimator::WeightMode;
use nsdarcy::report::{execute, RunConfig, RunMode};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "nsdarcy",
    version,
    about = "Adaptive mixed finite elements for coupled free and porous-medium flow"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once on a structured mesh and write the solution snapshot.
    Solve(RunArgs),
    /// Run a uniform-refinement convergence study against the exact solution.
    Study(RunArgs),
    /// Run the adaptive solve-estimate-mark-refine loop.
    Adapt(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir` from the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the unweighted free-flow indicator terms (the default).
    #[arg(long, conflicts_with = "classic_weights")]
    verbatim_estimator: bool,
    /// Apply textbook h-weights to the free-flow indicator terms.
    #[arg(long)]
    classic_weights: bool,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = Cli::parse();
    let (mode, args) = match &cli.command {
        Command::Solve(a) => (RunMode::SingleSolve, a),
        Command::Study(a) => (RunMode::UniformStudy, a),
        Command::Adapt(a) => (RunMode::AdaptiveRun, a),
    };
    let config = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let out = args.out.clone().unwrap_or_else(|| config.output.dir.clone());
    let weights = if args.classic_weights {
        WeightMode::Classic
    } else if args.verbatim_estimator {
        WeightMode::Verbatim
    } else {
        config.weight_mode()
    };
    match execute(&config, mode, &out, weights) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
