//! Command-line front end for the Taylor-series optimal control pipeline.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read config {path}: {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(#[from] config::ConfigError),
    #[error("computation failed: {0}")]
    Compute(#[from] taylor_hjb::Error),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::ReadConfig { .. } | CliError::Config(_) => 2,
            CliError::Compute(_) | CliError::Write { .. } => 1,
        }
    }
}
