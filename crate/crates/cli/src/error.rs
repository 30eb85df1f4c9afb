use std::path::PathBuf;

use serde_json::json;

/// Failures surfaced by the command-line driver.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("case not found: {0}")]
    CaseNotFound(String),
    #[error("solve first or pass --solve")]
    NotSolved,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("oracle checks failed: {0}")]
    OracleFailed(String),
    #[error(transparent)]
    Core(#[from] rdnr_core::error::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::CaseNotFound(_) => "case-not-found",
            CliError::NotSolved => "not-solved",
            CliError::Config(_) => "config",
            CliError::OracleFailed(_) => "oracle-failed",
            CliError::Core(e) => e.kind(),
            CliError::Io { .. } => "io",
            CliError::Csv(_) => "csv",
            CliError::Json(_) => "json",
        }
    }

    /// 2 for problems with the invocation or its input, 1 for run failures.
    pub fn exit_code(&self) -> i32 {
        use rdnr_core::error::Error as E;
        match self {
            CliError::CaseNotFound(_) | CliError::NotSolved | CliError::Config(_) => 2,
            CliError::Core(E::Parse(_) | E::Validation(_) | E::InvalidInput(_)) => 2,
            _ => 1,
        }
    }

    /// Machine-readable form written to stderr.
    pub fn envelope(&self) -> serde_json::Value {
        json!({ "error": { "kind": self.kind(), "message": self.to_string(), "exit_code": self.exit_code() } })
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
