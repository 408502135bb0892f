//! `oscnet`: runs collision experiments on oscillator networks from a JSON
//! configuration and writes JSON and CSV results.

// `!(x > 0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Command;
use config::{parse_seed_range, ExperimentConfig};
use error::{CliError, CliResult, ErrorKind};

#[derive(Debug, Parser)]
#[command(name = "oscnet", version, about = "Oscillator networks driven by random collisions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandArgs,
}

#[derive(Debug, Subcommand)]
pub enum CommandArgs {
    /// Simulate the process per seed and pool the sample covariance.
    Simulate(CommonArgs),
    /// Integrate the second-moment equation and track the Lyapunov functional.
    Covariance(CommonArgs),
    /// Check invariance of the Gibbs momentum marginal under one collision.
    Stationarity(CommonArgs),
    /// Krylov completeness and neutral-subspace analysis of the stiffness matrix.
    Dissipative(CommonArgs),
    /// One-step energy drift at high-energy states.
    DriftCheck(CommonArgs),
    /// Rank of the Jacobian of the collision-input map.
    RankProbe(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Seed range `a..b`, `a..=b` or a single seed; overrides the config.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Exit with status 4 when an acceptance threshold is missed.
    #[arg(long)]
    pub check: bool,
}

impl CommandArgs {
    fn split(&self) -> (Command, &CommonArgs) {
        match self {
            CommandArgs::Simulate(a) => (Command::Simulate, a),
            CommandArgs::Covariance(a) => (Command::Covariance, a),
            CommandArgs::Stationarity(a) => (Command::Stationarity, a),
            CommandArgs::Dissipative(a) => (Command::Dissipative, a),
            CommandArgs::DriftCheck(a) => (Command::DriftCheck, a),
            CommandArgs::RankProbe(a) => (Command::RankProbe, a),
        }
    }
}

pub fn load_config(args: &CommonArgs) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", args.config.display())))?;
    let mut cfg: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| CliError::validation(format!("config: {e}")))?;
    if let Some(range) = &args.seeds {
        cfg.run.seeds = parse_seed_range(range)?;
    }
    cfg.build()?;
    Ok(cfg)
}

fn run_parsed(cli: &Cli) -> CliResult<String> {
    let (command, args) = cli.command.split();
    let cfg = load_config(args)?;
    let bundle = commands::execute(command, &cfg, &args.out)?;
    if args.check && !bundle.all_passed() {
        return Err(commands::check_failure(&bundle));
    }
    Ok(serde_json::json!({
        "command": bundle.command,
        "out": args.out.display().to_string(),
        "checks_passed": bundle.all_passed(),
    })
    .to_string())
}

/// Entry point shared by the binary and the tests.
pub fn run<I, S>(args: I) -> ExitCode
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let err = CliError::new(ErrorKind::Usage, e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code());
        }
    };
    match run_parsed(&cli) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
