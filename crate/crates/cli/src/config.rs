//! Experiment configuration: defaults, `key=value` files and flag overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use steinshrink::estimation::{EstimatorKind, GridSpec};
use steinshrink::noise_models::ThetaSpec;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Risk,
    IdentityCheck,
    Sure,
    Adaptivity,
    SphereDemo,
    StudentDemo,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Risk => "risk",
            Command::IdentityCheck => "identity-check",
            Command::Sure => "sure",
            Command::Adaptivity => "adaptivity",
            Command::SphereDemo => "sphere-demo",
            Command::StudentDemo => "student-demo",
        }
    }
}

/// Flags shared by every subcommand. Unset flags fall back to the config file, then to defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Noise family, or a comma-separated list for identity-check
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub d: Option<String>,
    /// Student degrees of freedom
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub sigma: Option<String>,
    /// Corruption level
    #[arg(long)]
    pub eps: Option<String>,
    /// `zero`, `scaled:c` or a file with one value per line
    #[arg(long)]
    pub theta: Option<String>,
    /// `james-stein`, `soft-threshold` or `identity`
    #[arg(long)]
    pub estimator: Option<String>,
    /// `auto` or a comma-separated list
    #[arg(long)]
    pub lambda: Option<String>,
    /// `C:size`
    #[arg(long = "lambda-grid")]
    pub lambda_grid: Option<String>,
    #[arg(long)]
    pub reps: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Compute bound columns (`true` or `false`)
    #[arg(long)]
    pub bounds: Option<String>,
    /// Comma-separated dimensions for the sweeps
    #[arg(long)]
    pub dims: Option<String>,
    /// Lower signal ratio of the sphere sweep
    #[arg(long)]
    pub c: Option<String>,
    /// Upper signal ratio of the sphere sweep
    #[arg(long = "big-c")]
    pub big_c: Option<String>,
    /// `key=value` file
    #[arg(long)]
    pub config: Option<PathBuf>,
}

const KEYS: [&str; 16] = [
    "model", "d", "k", "sigma", "eps", "theta", "estimator", "lambda", "lambda-grid", "reps", "seed", "out", "bounds", "dims",
    "c", "big-c",
];

/// Fully resolved experiment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub models: Vec<String>,
    pub d: usize,
    pub k: f64,
    pub sigma: f64,
    pub eps: f64,
    pub theta_text: String,
    pub theta: ThetaSpec,
    pub estimator: EstimatorKind,
    pub lambda: Option<Vec<f64>>,
    pub lambda_grid: GridSpec,
    pub reps: u64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub bounds: bool,
    pub dims: Vec<usize>,
    pub c: f64,
    pub big_c: f64,
    raw: BTreeMap<String, String>,
}

fn defaults(command: Command) -> BTreeMap<String, String> {
    let dims = match command {
        Command::Adaptivity => "100,400,1600",
        Command::SphereDemo => "16,32,64,65,100,200",
        _ => "",
    };
    let (d, model) = match command {
        Command::StudentDemo => ("6", "student"),
        _ => ("5", "gaussian"),
    };
    [
        ("model", model),
        ("d", d),
        ("k", "6"),
        ("sigma", "1"),
        ("eps", "0.1"),
        ("theta", if command == Command::Adaptivity { "scaled:1" } else { "zero" }),
        ("estimator", "james-stein"),
        ("lambda", "auto"),
        ("lambda-grid", "2:512"),
        ("reps", "100000"),
        ("seed", "1"),
        ("bounds", "true"),
        ("dims", dims),
        ("c", "4"),
        ("big-c", "9"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

/// Parses `key = value` lines; `#` starts a comment and `_` in keys reads as `-`.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", no + 1)))?;
        let key = k.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Usage(format!("config line {}: unknown key {key:?}", no + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

fn read_config(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text)
}

fn flag_map(f: &Flags) -> BTreeMap<String, String> {
    let pairs: [(&str, Option<String>); 16] = [
        ("model", f.model.clone()),
        ("d", f.d.clone()),
        ("k", f.k.clone()),
        ("sigma", f.sigma.clone()),
        ("eps", f.eps.clone()),
        ("theta", f.theta.clone()),
        ("estimator", f.estimator.clone()),
        ("lambda", f.lambda.clone()),
        ("lambda-grid", f.lambda_grid.clone()),
        ("reps", f.reps.clone()),
        ("seed", f.seed.clone()),
        ("out", f.out.as_ref().map(|p| p.display().to_string())),
        ("bounds", f.bounds.clone()),
        ("dims", f.dims.clone()),
        ("c", f.c.clone()),
        ("big-c", f.big_c.clone()),
    ];
    pairs.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))).collect()
}

fn num<T: std::str::FromStr>(raw: &BTreeMap<String, String>, key: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    let v = &raw[key];
    v.trim().parse::<T>().map_err(|e| CliError::Usage(format!("--{key} {v:?}: {e}")))
}

fn list<T: std::str::FromStr>(text: &str, key: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| CliError::Usage(format!("--{key} entry {s:?}: {e}"))))
        .collect()
}

impl ExperimentConfig {
    /// Defaults, then the config file named by `--config`, then explicit flags.
    pub fn resolve(command: Command, flags: &Flags) -> Result<Self, CliError> {
        let mut raw = defaults(command);
        if let Some(path) = &flags.config {
            raw.extend(read_config(path)?);
        }
        raw.extend(flag_map(flags));
        Self::from_raw(command, raw)
    }

    pub fn from_raw(command: Command, raw: BTreeMap<String, String>) -> Result<Self, CliError> {
        let usage = |e: steinshrink::Error| CliError::Usage(e.to_string());
        let models = list::<String>(&raw["model"], "model")?;
        if models.is_empty() {
            return Err(CliError::Usage("--model is empty".into()));
        }
        let lambda = match raw["lambda"].trim() {
            "auto" => None,
            s => Some(list::<f64>(s, "lambda")?),
        };
        if lambda.as_ref().is_some_and(|l| l.is_empty() || l.iter().any(|x| !(*x >= 0.0))) {
            return Err(CliError::Usage("--lambda needs nonnegative values".into()));
        }
        let bounds = match raw["bounds"].trim() {
            "true" | "1" | "yes" => true,
            "false" | "0" | "no" => false,
            other => return Err(CliError::Usage(format!("--bounds {other:?}: expected true or false"))),
        };
        let cfg = ExperimentConfig {
            command,
            models,
            d: num(&raw, "d")?,
            k: num(&raw, "k")?,
            sigma: num(&raw, "sigma")?,
            eps: num(&raw, "eps")?,
            theta_text: raw["theta"].clone(),
            theta: ThetaSpec::parse(&raw["theta"]).map_err(usage)?,
            estimator: EstimatorKind::parse(&raw["estimator"]).map_err(usage)?,
            lambda,
            lambda_grid: GridSpec::parse(&raw["lambda-grid"]).map_err(usage)?,
            reps: num(&raw, "reps")?,
            seed: num(&raw, "seed")?,
            out: raw.get("out").map(PathBuf::from),
            bounds,
            dims: list::<usize>(&raw["dims"], "dims")?,
            c: num(&raw, "c")?,
            big_c: num(&raw, "big-c")?,
            raw,
        };
        if cfg.d < 1 || cfg.reps < 2 {
            return Err(CliError::Usage("need d >= 1 and reps >= 2".into()));
        }
        if !(cfg.sigma > 0.0) {
            return Err(CliError::Usage("--sigma must be positive".into()));
        }
        Ok(cfg)
    }

    /// Every resolved setting except the output path, in a fixed order.
    pub fn describe(&self) -> String {
        let mut parts = vec![format!("command={}", self.command.name())];
        parts.extend(self.raw.iter().filter(|(k, _)| k.as_str() != "out").map(|(k, v)| format!("{k}={v}")));
        parts.join(" ")
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma * self.sigma
    }
}
