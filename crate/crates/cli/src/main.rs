use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pelab::config::{self, Overrides};
use pelab::runner;

#[derive(Parser)]
#[command(name = "pelab", version, about = "Small-noise experiments for the stochastic primitive equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config (or a previous run's manifest.json).
    Run {
        config: PathBuf,
        /// Replace the configured experiment (its parameters fall back to defaults).
        #[arg(long)]
        experiment: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: logical cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Root directory for run directories.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run { config, experiment, seed, workers, out } = cli.command;
    let overrides = Overrides { experiment, seed, out, env: Overrides::from_env() };
    let result = config::load(&config, &overrides).and_then(|cfg| runner::run(&cfg, workers));
    match result {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            println!("artifacts: {}", outcome.dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("pelab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
