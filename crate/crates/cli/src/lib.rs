//! Command-line front end for the edgevid models.
//!
//! Each subcommand resolves its sweep axes into a [`plan::Plan`], evaluates it
//! and writes CSV tables plus a JSON manifest into the output directory. A
//! manifest alone is enough to regenerate its tables with `edgevid replay`.

pub mod cli;
pub mod commands;
pub mod format;
pub mod manifest;
pub mod plan;
pub mod report;

use edgevid::montecarlo::SimError;
use edgevid::numerics::NumericsError;
use edgevid::pipeline::PipelineError;
use edgevid::queue::QueueError;
use edgevid::radio::RadioError;
use edgevid::ConfigError;
use thiserror::Error;

pub use cli::run;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("numerical method did not converge: {0}")]
    NonConvergence(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Validation(_) => 3,
            CliError::NonConvergence(_) => 4,
            CliError::Model(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<NumericsError> for CliError {
    fn from(e: NumericsError) -> Self {
        match e {
            NumericsError::Convergence { .. } => CliError::NonConvergence(e.to_string()),
            e => CliError::Model(e.to_string()),
        }
    }
}

impl From<RadioError> for CliError {
    fn from(e: RadioError) -> Self {
        match e {
            RadioError::Numerics(n) => n.into(),
            e => CliError::Model(e.to_string()),
        }
    }
}

impl From<QueueError> for CliError {
    fn from(e: QueueError) -> Self {
        match e {
            QueueError::Overload { .. } => CliError::Config(e.to_string()),
            e => CliError::Model(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Radio(r) => r.into(),
            PipelineError::Queue(q) => q.into(),
            PipelineError::Config(c) => c.into(),
            PipelineError::Detection(d) => CliError::Config(d.to_string()),
            e => CliError::Model(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Numerics(n) => n.into(),
            SimError::Pipeline(p) => p.into(),
            e => CliError::Model(e.to_string()),
        }
    }
}
