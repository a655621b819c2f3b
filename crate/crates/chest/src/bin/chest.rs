//! Command-line wrapper around [`chest::cli`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use chest::cli::{self, Command, RunOptions};

#[derive(Parser)]
#[command(
    name = "chest",
    version,
    about = "Proxy-based metric learning in Euclidean and hyperbolic space"
)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Train a model and evaluate it on the test split.
    Train(CommonArgs),
    /// Evaluate a saved checkpoint on the configured test split.
    Eval(CommonArgs),
    /// Run the eight-cell loss and proxy-count ablation grid.
    Ablate(CommonArgs),
    /// Verify the geometric invariants of the ball kernels.
    CheckGeometry(CommonArgs),
    /// Verify analytic gradients against finite differences.
    CheckGrad(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the experiment TOML file.
    #[arg(long)]
    config: PathBuf,
    /// Dotted override applied on top of the file, e.g. loss.tau=0.5.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (default: chest-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides train.seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() {
    let parsed = Cli::parse();
    let (command, args) = match parsed.command {
        CliCommand::Train(a) => (Command::Train, a),
        CliCommand::Eval(a) => (Command::Eval, a),
        CliCommand::Ablate(a) => (Command::Ablate, a),
        CliCommand::CheckGeometry(a) => (Command::CheckGeometry, a),
        CliCommand::CheckGrad(a) => (Command::CheckGrad, a),
    };
    let mut overrides = Vec::new();
    for pair in &args.set {
        match pair.split_once('=') {
            Some((key, value)) => overrides.push((key.to_string(), value.to_string())),
            None => {
                eprintln!("error: --set expects KEY=VALUE, got {pair:?}");
                std::process::exit(1);
            }
        }
    }
    let opts = RunOptions {
        command,
        config: args.config,
        overrides,
        out: args.out,
        seed: args.seed,
    };
    std::process::exit(cli::run(&opts));
}
