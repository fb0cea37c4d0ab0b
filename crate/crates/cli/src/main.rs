use std::process::ExitCode;

use clap::Parser;
use hheston_cli::{emit, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match run(&cli.command, &cli.common) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("hheston: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Err(e) = emit(&outcome, &cli.common, &mut std::io::stdout().lock()) {
        eprintln!("hheston: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    match &outcome.failure {
        Some(e) => {
            eprintln!("hheston: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        None => ExitCode::SUCCESS,
    }
}
