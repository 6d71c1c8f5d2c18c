use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pco::commands::{cmd_check, cmd_demo_ws, cmd_run, cmd_validate_spec};
use pco::spec::DEFAULT_TRIALS;

#[derive(Parser)]
#[command(name = "pco", version, about = "Simulate and check process-commutative replicated objects")]
struct Cli {
    /// More log output (repeat for debug and trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario, write its JSONL log and summary, then check it.
    Run {
        file: PathBuf,
        /// Output directory for the log and summary.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-run every checker on a stored JSONL log.
    Check { log: PathBuf },
    /// Run the closure validators on a registered object.
    ValidateSpec {
        object: String,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Object parameters as JSON.
        #[arg(long)]
        params: Option<String>,
        /// Number of processes (2 for tokenring, 3 otherwise).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Run a work-stealing scenario and print per-task outcomes.
    DemoWs { file: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let mut out = io::stdout().lock();
    let code = match cli.command {
        Command::Run { file, out: dir, seed } => cmd_run(&file, dir.as_deref(), seed, &mut out),
        Command::Check { log } => cmd_check(&log, &mut out),
        Command::ValidateSpec {
            object,
            trials,
            seed,
            params,
            n,
        } => cmd_validate_spec(&object, params.as_deref(), n, trials, seed, &mut out),
        Command::DemoWs { file } => cmd_demo_ws(&file, &mut out),
    };
    ExitCode::from(code as u8)
}
