use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mdp_family_eval::experiment::{run_experiment, Command, ExperimentConfig, RunOptions};
use mdp_family_eval::Error;

/// Evaluate controllers over families of parameterized MDPs.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the family table only.
    Enumerate(Args),
    /// Train and evaluate every method on every point.
    Evaluate(Args),
    /// Run estimator budget sweeps over an existing score file.
    Estimate(Args),
    /// Write profiles, rankings and the summary from an existing score file.
    Report(Args),
    /// All stages.
    Run(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Global seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Score file to use instead of evaluating.
    #[arg(long)]
    scores: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Enumerate(a) => (Command::Enumerate, a),
        Cmd::Evaluate(a) => (Command::Evaluate, a),
        Cmd::Estimate(a) => (Command::Estimate, a),
        Cmd::Report(a) => (Command::Report, a),
        Cmd::Run(a) => (Command::Run, a),
    };
    let opts = RunOptions {
        out: args.out,
        jobs: args.jobs,
        seed: args.seed,
        scores: args.scores,
    };
    let result = ExperimentConfig::load(&args.config).and_then(|c| run_experiment(&c, command, &opts));
    match result {
        Ok(outcome) => {
            log::info!(
                "wrote {} files to {} ({} models trained, {} cache hits)",
                outcome.files.len(),
                outcome.out_dir.display(),
                outcome.trainings,
                outcome.cache_hits
            );
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(Error::InvalidConfig(problems)) => {
            eprintln!("invalid config:");
            for p in problems {
                eprintln!("  {p}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
