//! Command-line front end for `ltv-integral`: scenario configs, CSV traces,
//! SVG plots and stability reports.
//!
//! The binary is `ltvint`; this library exposes the pieces so they can be
//! tested without spawning processes.

pub mod commands;
pub mod config;
pub mod output;
pub mod plot;
pub mod setup;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{Config, ConfigError};

/// The bundled two-tank case-study configuration.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/two_tank.cfg");

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] ltv_integral::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => ExitStatus::ConfigError as u8,
            CliError::Core(_) | CliError::Io { .. } => ExitStatus::Failure as u8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    /// Success, or the stability verdict is satisfied.
    Success = 0,
    /// Stability violated or numeric failure.
    Failure = 1,
    ConfigError = 2,
    Inconclusive = 3,
}

/// Everything a command needs besides the parsed configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub config_path: Option<PathBuf>,
    pub out: PathBuf,
    /// Overrides the configured `kI` sweep.
    pub ki: Option<Vec<f64>>,
    /// Adds a run with anti-windup disabled at the largest `kI`.
    pub no_antiwindup: bool,
    /// Seed of the BIBS disturbance battery.
    pub seed: u64,
    /// Also run the stability analysis after `simulate`.
    pub analysis: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            config_path: None,
            out: PathBuf::from("out"),
            ki: None,
            no_antiwindup: false,
            seed: 0,
            analysis: false,
        }
    }
}

impl RunConfig {
    /// Reads and parses the configuration, or the bundled default when no path is given.
    pub fn load(&self) -> Result<Config, CliError> {
        let text = match &self.config_path {
            Some(path) => std::fs::read_to_string(path).map_err(|e| ConfigError {
                line: None,
                field: path.display().to_string(),
                message: format!("cannot read config file: {e}"),
            })?,
            None => DEFAULT_CONFIG.to_string(),
        };
        Ok(Config::parse(&text)?)
    }
}
