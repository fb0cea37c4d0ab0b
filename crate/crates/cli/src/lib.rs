//! Scenario-driven front end for the `hilbert-heston` engine.
//!
//! [`run`] executes one command and returns its reports; the binary only
//! parses arguments, writes outputs and maps errors to exit codes.

pub mod commands;
pub mod config;
pub mod report;
pub mod verify;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use config::{Scenario, ScenarioConfig};
use report::Report;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Engine(#[from] hilbert_heston::Error),
    #[error("runtime error: {0}")]
    Runtime(String),
    /// One or more verification checks failed.
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    /// 2 for usage and configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        use hilbert_heston::Error as E;
        match self {
            Self::Usage(_) | Self::Config(_) => 2,
            Self::Engine(E::Config(_) | E::Argument(_) | E::Eligibility(_)) => 2,
            Self::Engine(_) | Self::Runtime(_) | Self::CheckFailed(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hheston", version, about = "Forward-curve Monte Carlo: simulation, prices, Greeks and self-checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// Scenario file (TOML); defaults to the built-in desk scenario.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory for report files; reports go to stdout otherwise.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Emit JSON instead of CSV on stdout, and JSON mirrors next to CSV files.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Subcommand, Clone)]
pub enum Command {
    /// Simulate paths and compare moments with their closed forms.
    Simulate,
    /// Price the configured option.
    Price,
    /// Estimate Greeks with the configured estimators.
    Greeks,
    /// Run the property and consistency checks.
    Verify {
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Print the canonical form of the scenario.
    Config,
}

pub fn load_config(args: &CommonArgs) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.run.seed = s;
    }
    if let Some(t) = args.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        cfg.run.threads = Some(t);
    }
    Ok(cfg)
}

/// Output of one command.
pub struct Outcome {
    pub reports: Vec<Report>,
    /// Raw text for commands without tabular output.
    pub text: Option<String>,
    pub failure: Option<CliError>,
}

pub fn run(command: &Command, args: &CommonArgs) -> Result<Outcome, CliError> {
    let cfg = load_config(args)?;
    if let Command::Config = command {
        let text = cfg.canonical_toml()?;
        cfg.clone().resolve()?;
        return Ok(Outcome {
            reports: Vec::new(),
            text: Some(text),
            failure: None,
        });
    }
    let sc: Scenario = cfg.resolve()?;
    let (reports, failure) = match command {
        Command::Simulate => (commands::simulate(&sc)?, None),
        Command::Price => (commands::price(&sc)?, None),
        Command::Greeks => (commands::greeks(&sc)?, None),
        Command::Verify { inject_fault } => {
            let (reports, ok) = verify::verify(&sc, *inject_fault)?;
            let failure = (!ok).then(|| CliError::CheckFailed("verification checks failed".into()));
            (reports, failure)
        }
        Command::Config => unreachable!(),
    };
    Ok(Outcome {
        reports,
        text: None,
        failure,
    })
}

/// Writes reports to `out` (CSV plus optional JSON mirrors) or to `stdout`.
pub fn emit(outcome: &Outcome, args: &CommonArgs, stdout: &mut impl Write) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Runtime(e.to_string());
    if let Some(text) = &outcome.text {
        return stdout.write_all(text.as_bytes()).map_err(io);
    }
    match &args.out {
        Some(dir) => write_dir(&outcome.reports, dir, args.json),
        None if args.json => {
            let all: Vec<_> = outcome.reports.iter().map(Report::to_json).collect();
            let text = serde_json::to_string_pretty(&serde_json::json!({ "reports": all }))
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            writeln!(stdout, "{text}").map_err(io)
        }
        None => {
            for r in &outcome.reports {
                stdout.write_all(r.to_csv()?.as_bytes()).map_err(io)?;
            }
            Ok(())
        }
    }
}

fn write_dir(reports: &[Report], dir: &Path, json: bool) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Runtime(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    for r in reports {
        std::fs::write(dir.join(format!("{}.csv", r.name)), r.to_csv()?).map_err(io)?;
        if json {
            let text = serde_json::to_string_pretty(&r.to_json()).map_err(|e| CliError::Runtime(e.to_string()))?;
            std::fs::write(dir.join(format!("{}.json", r.name)), text + "\n").map_err(io)?;
        }
    }
    Ok(())
}
