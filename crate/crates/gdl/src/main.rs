use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gdl::commands::{cmd_eval, cmd_infer, cmd_render, cmd_simulate, cmd_sweep, cmd_train};
use gdl::parallel::{run_with_threads, thread_count};
use gdl::{ExperimentConfig, Result};

/// Gated depth simulation, estimation and evaluation.
#[derive(Parser)]
#[command(name = "gdl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render gated slices, ground truth and scanner masks for all splits.
    Simulate(Common),
    /// Train the pixel regressor or fit the ratio polynomial.
    Train(Common),
    /// Predict depth and log-scale maps for the test split.
    Infer(Common),
    /// Evaluate test predictions against ground truth.
    Eval(Common),
    /// Coverage versus error under SNR or uncertainty filtering.
    Sweep(Common),
    /// Grayscale previews of the predicted maps.
    Render(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment TOML; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set noise.a=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn run(cli: Cli) -> Result<String> {
    let (common, step): (&Common, fn(&ExperimentConfig) -> Result<String>) = match &cli.command {
        Command::Simulate(c) => (c, cmd_simulate),
        Command::Train(c) => (c, cmd_train),
        Command::Infer(c) => (c, cmd_infer),
        Command::Eval(c) => (c, cmd_eval),
        Command::Sweep(c) => (c, cmd_sweep),
        Command::Render(c) => (c, cmd_render),
    };
    let cfg = ExperimentConfig::load(common.config.as_deref(), &common.overrides)?;
    run_with_threads(thread_count()?, || step(&cfg))?
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("gdl: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
