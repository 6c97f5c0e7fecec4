use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use alipp::cli;

#[derive(Parser)]
#[command(name = "alipp", version, about = "Active-learning path planning simulator")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Run a planner × seed grid and aggregate the learning curves.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the sweep file's `out_root`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Replace the sweep's seed list with this single seed.
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Check a config and print it with defaults filled in.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { cli::EXIT_CONFIG } else { cli::EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let code = match args.command {
        Command::Run { config, out, seed_override } => cli::cmd_run(&config, &out, seed_override),
        Command::Sweep { config, out, jobs, seed_override } => cli::cmd_sweep(&config, out.as_deref(), jobs, seed_override),
        Command::Validate { config } => cli::cmd_validate(&config),
    };
    ExitCode::from(code as u8)
}
