//! Command-line front end: configuration, CSV tables and the experiment commands.

pub mod commands;
pub mod config;
pub mod models;

use std::ffi::OsString;
use std::path::Path;

use clap::{Parser, Subcommand};

pub use commands::{cmd_adaptivity, cmd_identity_check, cmd_risk, cmd_sphere_demo, cmd_student_demo, cmd_sure};
pub use config::{Command, ExperimentConfig, Flags};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Usage(String),
    Guard(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Guard(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Guard(m) => write!(f, "{m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<steinshrink::Error> for CliError {
    fn from(e: steinshrink::Error) -> Self {
        use steinshrink::Error as E;
        match e {
            E::NumericalGuard(_) | E::Singular(_) | E::Quadrature(_) | E::Sampling(_) => CliError::Guard(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

/// Formats a value for CSV output; non-finite values become `NA`.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        "NA".to_string()
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), fmt_num)
}

/// Result rows of one command plus extra `#` metadata lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub meta: Vec<String>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table { columns: columns.to_vec(), rows: Vec::new(), meta: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn index(&self, column: &str) -> usize {
        self.columns.iter().position(|c| *c == column).unwrap_or_else(|| panic!("no column {column:?}"))
    }

    pub fn text(&self, row: usize, column: &str) -> &str {
        &self.rows[row][self.index(column)]
    }

    /// Numeric cell, `None` for `NA` or text.
    pub fn value(&self, row: usize, column: &str) -> Option<f64> {
        self.text(row, column).parse().ok()
    }

    pub fn to_csv(&self, cfg: &ExperimentConfig) -> Result<String, CliError> {
        let mut out = format!("# steinshrink {VERSION}\n# config: {}\n# seed: {}\n", cfg.describe(), cfg.seed);
        for m in &self.meta {
            out.push_str(&format!("# {m}\n"));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(&self.columns).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        out.push_str(&String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))?);
        Ok(out)
    }
}

#[derive(Debug, Parser)]
#[command(name = "steinshrink", version, about = "Monte Carlo experiments for shrinkage under non-Gaussian noise")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Risk of an estimator with analytic bounds
    Risk(Flags),
    /// Residuals of the Stein and zero-bias identities
    IdentityCheck(Flags),
    /// Risk-estimate bias and threshold calibration
    Sure(Flags),
    /// Risk under shrinking noise as the dimension grows
    Adaptivity(Flags),
    /// Closed-form improvement certificate on the sphere
    SphereDemo(Flags),
    /// Student-t discrepancy constants and zero-bias remainder
    StudentDemo(Flags),
}

impl Sub {
    fn split(self) -> (Command, Flags) {
        match self {
            Sub::Risk(f) => (Command::Risk, f),
            Sub::IdentityCheck(f) => (Command::IdentityCheck, f),
            Sub::Sure(f) => (Command::Sure, f),
            Sub::Adaptivity(f) => (Command::Adaptivity, f),
            Sub::SphereDemo(f) => (Command::SphereDemo, f),
            Sub::StudentDemo(f) => (Command::StudentDemo, f),
        }
    }
}

/// Runs the command a config describes.
pub fn execute(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    match cfg.command {
        Command::Risk => cmd_risk(cfg),
        Command::IdentityCheck => cmd_identity_check(cfg),
        Command::Sure => cmd_sure(cfg),
        Command::Adaptivity => cmd_adaptivity(cfg),
        Command::SphereDemo => cmd_sphere_demo(cfg),
        Command::StudentDemo => cmd_student_demo(cfg),
    }
}

/// Runs the command and returns its CSV text.
pub fn execute_csv(cfg: &ExperimentConfig) -> Result<String, CliError> {
    execute(cfg)?.to_csv(cfg)
}

fn emit(cfg: &ExperimentConfig, csv: &str) -> Result<(), CliError> {
    match &cfg.out {
        Some(p) if p != Path::new("-") => {
            std::fs::write(p, csv).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
        }
        _ => {
            print!("{csv}");
            Ok(())
        }
    }
}

/// Resolves a config from a full argument list, program name first.
pub fn parse_config<I, T>(args: I) -> Result<ExperimentConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    let (command, flags) = cli.command.split();
    ExperimentConfig::resolve(command, &flags)
}

/// Entry point shared by the binary and tests; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (command, flags) = cli.command.split();
    let result = ExperimentConfig::resolve(command, &flags).and_then(|cfg| emit(&cfg, &execute_csv(&cfg)?));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("steinshrink: {e}");
            e.exit_code()
        }
    }
}
