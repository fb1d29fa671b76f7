//! Command implementations behind the `sparse-dve` binary.

pub mod commands;
pub mod manifest;
pub mod plot;

use thiserror::Error;

use sparse_dve::analysis::AnalysisError;
use sparse_dve::ppo::PpoError;

/// Exit code for invalid configuration or arguments.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for failures while running.
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => EXIT_CONFIG,
            CliError::Runtime(_) | CliError::Io { .. } => EXIT_RUNTIME,
        }
    }

    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

impl From<PpoError> for CliError {
    fn from(e: PpoError) -> Self {
        match e {
            PpoError::Config(v) => CliError::Config(v),
            PpoError::Checkpoint(m) => CliError::Input(format!("checkpoint: {m}")),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Ppo(p) => p.into(),
            AnalysisError::Input(m) => CliError::Input(m),
            AnalysisError::EmptyWindow { .. } | AnalysisError::ZeroVariance => CliError::Input(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}
