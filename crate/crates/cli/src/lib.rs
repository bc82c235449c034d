//! Batch front end: read a JSON run configuration, run one pipeline, write CSV
//! tables plus `report.json`.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{Command, RunConfig};
use output::{config_hash, write_outputs, RunReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric error: {0}")]
    Numeric(#[from] robust_affine::Error),
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::CheckFailed(_) => 4,
        }
    }
}

/// Options that override or supplement the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Validate, execute and write outputs. Asserted check failures are reported
/// as [`CliError::CheckFailed`] after the outputs are on disk.
pub fn run(command: Command, config_path: &Path, opts: &RunOptions) -> Result<RunReport, CliError> {
    let mut config = RunConfig::read(config_path)?;
    if let (Some(seed), Some(mc)) = (opts.seed, config.mc.as_mut()) {
        mc.seed = seed;
    }
    let base = config_path.parent().unwrap_or(Path::new("."));
    let loaded = config.validate(command, base)?;
    let out_dir = opts
        .out
        .clone()
        .or_else(|| config.output_dir.as_ref().map(|d| base.join(d)))
        .unwrap_or_else(|| PathBuf::from("out"));

    let outcome = match command {
        Command::PriceBond => commands::price_bond(&config)?,
        Command::Simulate => commands::simulate(&config)?,
        Command::Check => commands::check(&config, &loaded)?,
        Command::PriceProduct => commands::price_product(&config, &loaded)?,
    };
    let mut report = RunReport {
        command: command.id(),
        config_sha256: config_hash(&config),
        config,
        verdicts: outcome.verdicts,
        tables: Vec::new(),
        timings_seconds: outcome.timings,
    };
    write_outputs(&out_dir, &mut report, &outcome.tables)?;
    let failures = report.asserted_failures();
    if !failures.is_empty() {
        let names: Vec<String> = failures.iter().map(|v| format!("{} [{}]", v.check, v.subject)).collect();
        return Err(CliError::CheckFailed(names.join("; ")));
    }
    Ok(report)
}
