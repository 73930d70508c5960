//! `starflow run --config <file> [--allow-out-of-range] [--out <dir>]`
//! `starflow report --series <file>...`

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use starflow_core::config::parse_config_with;
use starflow_core::harness::{report_command, run_command, RunStatus};

#[derive(Parser)]
#[command(name = "starflow", version, about = "Curvature flows of star-shaped hypersurfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configured flow and write its series, snapshots and logs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Waive the convergence parameter ranges and the a-priori monitors.
        #[arg(long)]
        allow_out_of_range: bool,
        /// Overrides `run.out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize trends, decay rate and final margins of series files.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        series: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, allow_out_of_range, out } => run(config, allow_out_of_range, out),
        Command::Report { series } => match report_command(&series) {
            Ok((_, text)) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
    }
}

fn run(path: PathBuf, allow_out_of_range: bool, out: Option<PathBuf>) -> ExitCode {
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
    };
    let mut config = match parse_config_with(&text, allow_out_of_range) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
    };
    if let Some(dir) = out {
        config.out_dir = dir;
    }
    match run_command(&config) {
        Ok(RunStatus::Completed(s)) => {
            println!(
                "{:?} after {} steps at t = {:e}; wrote {}",
                s.termination,
                s.steps,
                s.t,
                config.out_dir.display()
            );
            ExitCode::SUCCESS
        }
        Ok(status @ RunStatus::Failed(_)) => {
            if let RunStatus::Failed(f) = &status {
                eprintln!("run failed ({}): {}", f.kind, f.message);
                eprintln!("failure record: {}", config.out_dir.join("failure.json").display());
            }
            ExitCode::from(status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
