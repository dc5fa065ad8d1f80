use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use selfdiff::experiment::{list_experiments, oracle_table, run_experiment, threads_from_env, ExitStatus, ExperimentConfig};

/// Run self-interacting diffusion experiments.
#[derive(Parser)]
#[command(name = "selfdiff", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file and write its report directory.
    Run {
        config: PathBuf,
    },
    /// List the canned experiments.
    List,
    /// Print the exact mean/variance table of a 1-D quadratic config as CSV.
    Oracle {
        config: PathBuf,
    },
}

fn exit(status: ExitStatus) -> ExitCode {
    ExitCode::from(status.code() as u8)
}

fn fail(e: selfdiff::Error) -> ExitCode {
    eprintln!("error: {e}");
    exit(ExitStatus::of_error(&e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for line in list_experiments() {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Command::Oracle { config } => {
            let cfg = match ExperimentConfig::from_file(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            let stdout = io::stdout();
            match oracle_table(&cfg, stdout.lock()) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
        Command::Run { config } => {
            let (cfg, threads) = match ExperimentConfig::from_file(&config).and_then(|c| Ok((c, threads_from_env()?))) {
                Ok(v) => v,
                Err(e) => return fail(e),
            };
            match run_experiment(&cfg, threads) {
                Ok(report) => {
                    let mut out = io::stdout().lock();
                    let _ = out.write_all(report.summary_text().as_bytes());
                    let _ = writeln!(out, "report written to {}", report.out_dir.display());
                    exit(report.status())
                }
                Err(e) => fail(e),
            }
        }
    }
}
