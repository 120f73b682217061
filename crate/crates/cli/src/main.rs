//! `hidden-gibbs`: batch front end for Gibbs measures, their amalgamated
//! pushforwards and induced potentials.
//!
//! Exit codes: 0 ok, 2 invalid input, 3 tolerance not certifiable,
//! 4 oracle mismatch under `--verify` or `verify`, 1 I/O failure.

mod commands;
mod output;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Cylinder log-probabilities, pressure and Gibbs constant of mu_psi.
    Measure,
    /// Cylinder log-probabilities of the amalgamated measure nu.
    Pushforward,
    /// Induced potential values with error bars, variation report and decay envelope.
    Induced,
    /// Cross-check the pipeline against brute-force oracles.
    Verify,
    /// Full certificate report.
    Report,
}

#[derive(Args, Debug, Clone)]
pub struct Options {
    /// Problem spec (JSON).
    #[arg(long, global = true)]
    pub spec: Option<PathBuf>,
    /// Output directory; tables go to stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Target tolerance; switches `induced` to the double-limit schedule.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Approximant range r.
    #[arg(long, global = true)]
    pub r: Option<usize>,
    /// Truncation depth n.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Schedule exponent, n(r) = r^(1 + delta).
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// Compare results against the oracles.
    #[arg(long, global = true)]
    pub verify: bool,
    /// Report logarithms in base 2.
    #[arg(long, global = true)]
    pub log2: bool,
    /// Enumeration cap.
    #[arg(long, global = true)]
    pub cap: Option<u64>,
}

#[derive(Parser, Debug)]
#[command(name = "hidden-gibbs", version, about = "Gibbs measures, hidden Markov pushforwards and induced potentials")]
struct App {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    options: Options,
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Certification(String),
    VerifyMismatch(String),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Certification(m) => write!(f, "cannot certify: {m}"),
            CliError::VerifyMismatch(m) => write!(f, "verify mismatch: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Certification(_) => 3,
            CliError::VerifyMismatch(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<hidden_gibbs::Error> for CliError {
    fn from(e: hidden_gibbs::Error) -> Self {
        use hidden_gibbs::Error as E;
        match e {
            E::Budget { .. } | E::Certification(_) | E::IterationCap { .. } | E::NotPrimitive(_) => {
                CliError::Certification(e.to_string())
            }
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let app = App::parse();
    match commands::run(app.command, &app.options) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
