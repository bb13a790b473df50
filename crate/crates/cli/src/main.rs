use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pricer_cli::{CliError, Command, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "pricer",
    version,
    about = "Learn a pricing kernel from price paths and price options with it"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate (or ingest) the price trajectory.
    GenData(Common),
    /// Train the log-utility policy that defines the pricing kernel.
    TrainKernel(Common),
    /// Train the option value networks.
    TrainPrice(Common),
    /// Compare learned prices with the finite-difference benchmark.
    Evaluate(Common),
    /// Compute the model-based oracles.
    Benchmark(Common),
    /// Write the policy, implied-volatility and loss-curve tables.
    Report(Common),
    /// Check a configuration and list every problem.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override a configuration value, e.g. `--set kernel.training.episodes=100`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; defaults to the configuration's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn validate(args: &Common) -> Result<(), CliError> {
    let config = ExperimentConfig::load(&args.config, &args.overrides)?;
    let findings = config.findings(&base_dir(&args.config));
    for note in config.rounding_notes() {
        println!("note: {note}");
    }
    if findings.is_empty() {
        println!("{}: ok", args.config.display());
        Ok(())
    } else {
        Err(CliError::Validation(findings))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (command, args) = match cli.command {
        Cmd::Validate(args) => return validate(&args),
        Cmd::GenData(a) => (Command::GenData, a),
        Cmd::TrainKernel(a) => (Command::TrainKernel, a),
        Cmd::TrainPrice(a) => (Command::TrainPrice, a),
        Cmd::Evaluate(a) => (Command::Evaluate, a),
        Cmd::Benchmark(a) => (Command::Benchmark, a),
        Cmd::Report(a) => (Command::Report, a),
    };
    let config = ExperimentConfig::load(&args.config, &args.overrides)?;
    Experiment::new(config, &base_dir(&args.config), args.out)?.run(command)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
