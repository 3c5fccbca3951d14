use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use divbandit_cli::commands::{self, LowerBoundArgs};
use divbandit_cli::{CliError, ExperimentConfig, Overrides};

/// Diversity-preserving stochastic bandits: simulate, analyze, and compute
/// lower bounds from an experiment config.
///
/// Exit codes: 0 success, 2 configuration error, 3 runtime error.
#[derive(Parser)]
#[command(name = "divbandit", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config; default results/<name>).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for replicated runs.
    #[arg(long, global = true, env = "DIVBANDIT_THREADS")]
    threads: Option<usize>,
    /// Checkpoint stride (overrides the config).
    #[arg(long, global = true)]
    stride: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every policy on every instance and write runs.csv, summary.csv and meta.json.
    Run(Target),
    /// Print gaps, regret envelopes and t0 as JSON.
    Analyze(Target),
    /// Print the finite-grid lower-bound constant as JSON.
    Lowerbound {
        #[command(flatten)]
        target: Target,
        /// Lowest alternative mean (default: the arm's own mean).
        #[arg(long, allow_negative_numbers = true)]
        grid_min: Option<f64>,
        /// Highest alternative mean (default: the arm's mean + 10).
        #[arg(long, allow_negative_numbers = true)]
        grid_max: Option<f64>,
        /// Grid points per arm (default 50).
        #[arg(long)]
        grid_points: Option<usize>,
        /// Gaussian variance used for bounded instances.
        #[arg(long)]
        sigma2: Option<f64>,
        /// Vary all zero-mass arms jointly.
        #[arg(long)]
        joint: bool,
    },
    /// Replay fixed mixed actions on a two-armed instance and write confsets.csv.
    Confsets(Target),
}

#[derive(Args)]
struct Target {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Only process the instance with this label.
    #[arg(long)]
    instance: Option<String>,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        seed: cli.global.seed,
        out_dir: cli.global.out_dir,
        stride: cli.global.stride,
    };
    let target = match &cli.command {
        Command::Run(t) | Command::Analyze(t) | Command::Confsets(t) => t,
        Command::Lowerbound { target, .. } => target,
    };
    let mut config = ExperimentConfig::load(&target.config)?;
    config.apply(&overrides);
    let resolved = config.resolve()?;
    let only = target.instance.as_deref();
    let (mut out, mut err) = (io::stdout().lock(), io::stderr().lock());

    match &cli.command {
        Command::Run(_) => commands::run(&resolved, only, cli.global.threads, &mut out).map(drop),
        Command::Analyze(_) => commands::analyze(&resolved, only, &mut out, &mut err).map(drop),
        Command::Lowerbound {
            grid_min,
            grid_max,
            grid_points,
            sigma2,
            joint,
            ..
        } => {
            let args = LowerBoundArgs {
                grid_min: *grid_min,
                grid_max: *grid_max,
                grid_points: *grid_points,
                sigma2: *sigma2,
                joint: *joint,
            };
            commands::lowerbound(&resolved, only, &args, &mut out, &mut err).map(drop)
        }
        Command::Confsets(_) => commands::confsets(&resolved, only, &mut out).map(drop),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("divbandit: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
