use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use delaych::config::load_config;
use delaych::formats::render_json;
use delaych::{cmd_solve, cmd_study, cmd_verify, CliError};
use serde_json::json;

/// Delay-approximation solver for a viscous Cahn–Hilliard system with estimate audits.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a config and write snapshots, report.json and series.csv.
    Solve { config: PathBuf },
    /// Run a refinement study and write study.csv.
    Study {
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Re-run the audits of a solve output directory; the report goes to stdout.
    Verify {
        dir: PathBuf,
        /// Comma-separated audit names (default: those of the original run).
        #[arg(long, value_delimiter = ',')]
        audits: Option<Vec<String>>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve { config } => {
            let out = cmd_solve(&load_config(&config)?)?;
            println!("{}", json!({ "status": "pass", "dir": out.dir.display().to_string() }));
        }
        Command::Study { config, levels } => {
            let out = cmd_study(&load_config(&config)?, levels)?;
            println!("{}", json!({ "status": "pass", "dir": out.dir.display().to_string(), "levels": out.rows.len() }));
        }
        Command::Verify { dir, audits } => {
            let out = cmd_verify(&dir, audits.as_deref())?;
            print!("{}", render_json(&out.report));
            if !out.passed {
                let names = out.report["audits"]
                    .as_array()
                    .into_iter()
                    .flatten()
                    .filter(|a| a["verdict"] != "pass")
                    .filter_map(|a| a["name"].as_str().map(String::from))
                    .collect();
                return Err(CliError::Audit(names));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({ "code": "UsageError", "message": e.to_string() }));
            return ExitCode::from(4);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
