//! Experiment harness behind the `carnot-wavelets` binary.
//!
//! Every subcommand reads an [`ExperimentConfig`], writes its CSV and JSON
//! outputs into one directory together with a `run_manifest.json`, and maps
//! failures to exit codes: 0 pass, 1 configuration error, 2 contract
//! violation.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

pub use config::ExperimentConfig;
pub use output::Output;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Contract(_) => 2,
        }
    }
}

impl From<carnot::Error> for CliError {
    fn from(e: carnot::Error) -> Self {
        use carnot::Error as E;
        match e {
            E::ChebyshevNotConverged { .. }
            | E::MomentOrderTooLow { .. }
            | E::EmptySampleSet(_)
            | E::TilingViolation(_)
            | E::DensityPrecheckFailed { .. }
            | E::NotContractive { .. }
            | E::MaxIterExceeded { .. }
            | E::NonFiniteValue(_)
            | E::GridMismatch => CliError::Contract(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o: {e}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    GroupInfo,
    Wavelet,
    Besov,
    Frame,
    Equiv,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GroupInfo => "group-info",
            Command::Wavelet => "wavelet",
            Command::Besov => "besov",
            Command::Frame => "frame",
            Command::Equiv => "equiv",
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub skip_moments: bool,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    artifact_version: &'a str,
    config_hash: String,
    seed: u64,
    threads: usize,
    status: &'a str,
    message: Option<String>,
    steps: &'a [output::Step],
    files: Vec<String>,
}

pub const DEFAULT_OUT: &str = "carnot-out";

pub fn apply_overrides(mut cfg: ExperimentConfig, ov: &Overrides) -> ExperimentConfig {
    if let Some(seed) = ov.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &ov.out {
        cfg.out = Some(out.clone());
    }
    if ov.skip_moments {
        cfg.skip_moments = true;
    }
    cfg
}

/// Runs `cmd` with an already loaded config and writes the manifest.
pub fn run_config(cmd: Command, cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let dir = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    std::fs::create_dir_all(&dir)?;
    let mut out = Output::new(dir);
    let started = Instant::now();
    let result = match cmd {
        Command::GroupInfo => commands::group_info(cfg, &mut out),
        Command::Wavelet => commands::wavelet(cfg, &mut out),
        Command::Besov => commands::besov(cfg, &mut out),
        Command::Frame => commands::frame(cfg, &mut out),
        Command::Equiv => commands::equiv(cfg, &mut out),
    };
    out.step("total", started.elapsed());
    let (status, message) = match &result {
        Ok(()) => ("pass", None),
        Err(e) => (
            if e.exit_code() == 1 {
                "config_error"
            } else {
                "contract_violation"
            },
            Some(e.to_string()),
        ),
    };
    let manifest = Manifest {
        command: cmd.name(),
        artifact_version: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        threads: rayon::current_num_threads(),
        status,
        message,
        steps: out.steps(),
        files: out
            .files()
            .iter()
            .map(|p| p.strip_prefix(out.dir()).unwrap_or(p).display().to_string())
            .collect(),
    };
    let path = out.dir().join("run_manifest.json");
    std::fs::write(
        &path,
        serde_json::to_vec_pretty(&manifest).expect("manifest serializes"),
    )?;
    result.map(|()| out)
}

/// Loads `config`, applies overrides and runs `cmd`.
pub fn run(cmd: Command, config: &Path, ov: &Overrides) -> Result<Output, CliError> {
    let cfg = apply_overrides(ExperimentConfig::load(config)?, ov);
    run_config(cmd, &cfg)
}
