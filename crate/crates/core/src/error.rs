use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("case parse error: {0}")]
    Parse(String),

    #[error("case validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("loop enumeration exceeded cap of {cap} cycles")]
    CycleCap { cap: usize },

    #[error("guard tripped: {0}")]
    Guard(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid uncertainty set: {0}")]
    Uncertainty(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("node limit reached before gap closed (gap {gap:.3e})")]
    NodeLimit { gap: f64 },

    #[error("dual residual {residual:.3e} exceeds tolerance")]
    DualResidual { residual: f64 },

    #[error("big-M saturated in {0}")]
    BigMSaturated(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI error envelope.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse(_) => "parse",
            Error::Validation(_) => "validation",
            Error::CycleCap { .. } => "cycle-cap",
            Error::Guard(_) => "guard",
            Error::InvalidInput(_) => "invalid-input",
            Error::Uncertainty(_) => "uncertainty",
            Error::Infeasible(_) => "infeasible",
            Error::Solver(_) => "solver",
            Error::NodeLimit { .. } => "node-limit",
            Error::DualResidual { .. } => "dual-residual",
            Error::BigMSaturated(_) => "big-m",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
