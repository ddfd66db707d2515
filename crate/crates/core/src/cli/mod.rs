//! Command-line front end: `calibrate`, `payoff`, `simulate` and `verify`.
//!
//! Exit codes: 0 success, 2 usage error, 3 configuration error, 4 calibration
//! infeasible, 5 verification failure, 1 anything else (I/O).

pub mod commands;
pub mod config;
pub mod verify;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::calibrate::CalibrationError;
use crate::design::Regime;
pub use config::{ConfigError, RunConfig};
pub use verify::VerificationFailed;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_INFEASIBLE: u8 = 4;
pub const EXIT_VERIFY: u8 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "reinsure",
    version,
    about = "Optimal proportional reinsurance designs under solvency constraints"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (`key = value` lines); defaults apply when omitted
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Comma-separated regimes (unconstrained, strict, var, es_p, es_q) or `all`
    #[arg(long, value_name = "LIST")]
    pub regime: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate each regime and print parameters with binding residuals
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Print JSON instead of the text report
        #[arg(long)]
        json: bool,
    },
    /// Write terminal payoff curves (original scale) to payoff.csv
    Payoff {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.01)]
        z_min: f64,
        #[arg(long, default_value_t = 10.0)]
        z_max: f64,
        #[arg(long, default_value_t = 1000)]
        points: usize,
        /// Output directory; overrides output.dir
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Simulate controlled surplus traces and write one CSV per seed
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Single seed; overrides simulation.seeds
        #[arg(long)]
        seed: Option<u64>,
        /// Time steps; overrides simulation.n_steps
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Run the closed-form, Monte-Carlo and optimality checks
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Level::Quick)]
        level: Level,
        /// Monte-Carlo sample count; overrides the level default
        #[arg(long)]
        samples: Option<usize>,
        /// Base seed for the Monte-Carlo checks
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Multiplies every calibrated lambda by this factor before checking
        #[arg(long, hide = true)]
        corrupt_lambda: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Level {
    Quick,
    Full,
}

fn load(common: &Common) -> Result<(RunConfig, Vec<Regime>)> {
    let cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let regimes = match &common.regime {
        Some(list) => {
            let regimes = config::parse_regimes("--regime", list)?;
            let mut checked = cfg.clone();
            checked.regimes = regimes.clone();
            checked.validate()?;
            regimes
        }
        None => cfg.regimes.clone(),
    };
    Ok((cfg, regimes))
}

/// Runs a parsed command, writing reports to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Calibrate { common, json } => {
            let (cfg, regimes) = load(&common)?;
            commands::cmd_calibrate(&cfg, &regimes, json, out)
        }
        Command::Payoff {
            common,
            z_min,
            z_max,
            points,
            out: dir,
        } => {
            let (cfg, regimes) = load(&common)?;
            let dir = dir.unwrap_or_else(|| cfg.output_dir.clone());
            let path = commands::cmd_payoff(&cfg, &regimes, z_min, z_max, points, &dir)?;
            writeln!(out, "{}", path.display())?;
            Ok(())
        }
        Command::Simulate {
            common,
            seed,
            steps,
            out: dir,
        } => {
            let (mut cfg, regimes) = load(&common)?;
            if let Some(seed) = seed {
                cfg.seeds = vec![seed];
            }
            if let Some(steps) = steps {
                cfg.n_steps = steps;
                cfg.validate()?;
            }
            let dir = dir.unwrap_or_else(|| cfg.output_dir.clone());
            for path in commands::cmd_simulate(&cfg, &regimes, &dir)? {
                writeln!(out, "{}", path.display())?;
            }
            Ok(())
        }
        Command::Verify {
            common,
            level,
            samples,
            seed,
            corrupt_lambda,
        } => {
            let (cfg, regimes) = load(&common)?;
            let n = samples.unwrap_or(match level {
                Level::Quick => cfg.mc_samples,
                Level::Full => cfg.mc_samples.max(10_000_000),
            });
            let options = verify::VerifyOptions {
                samples: n,
                seed,
                corrupt_lambda,
            };
            let report = verify::run_verify(&cfg, &regimes, &options, out)?;
            if report.all_passed() {
                Ok(())
            } else {
                Err(VerificationFailed {
                    failures: report.failures(),
                }
                .into())
            }
        }
    }
}

/// Exit code for an error raised by [`execute`].
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        EXIT_CONFIG
    } else if let Some(e) = err.downcast_ref::<CalibrationError>() {
        match e {
            CalibrationError::Design(_) => EXIT_CONFIG,
            _ => EXIT_INFEASIBLE,
        }
    } else if err.downcast_ref::<VerificationFailed>().is_some() {
        EXIT_VERIFY
    } else {
        1
    }
}

/// Parses `args` and runs the command against stdout.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(cli, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
