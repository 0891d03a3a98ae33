use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nematoplate::cli;

#[derive(Parser)]
#[command(version, about = "Nematic elastomer bilayer plate solver")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a configuration file.
    Run { config: PathBuf },
    /// Check a configuration file and print `key: message` diagnostics.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let code = match Args::parse().cmd {
        Cmd::Run { config } => cli::run(&config),
        Cmd::Validate { config } => match std::fs::read_to_string(&config) {
            Ok(text) => {
                let diags = cli::validate(&text);
                for d in &diags {
                    eprintln!("{d}");
                }
                if diags.iter().any(|d| d.level == cli::Level::Error) { cli::EXIT_CONFIG } else { cli::EXIT_OK }
            }
            Err(e) => {
                eprintln!("config: cannot read {}: {e}", config.display());
                cli::EXIT_CONFIG
            }
        },
    };
    ExitCode::from(code as u8)
}
