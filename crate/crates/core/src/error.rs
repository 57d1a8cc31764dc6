use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("tape does not belong to this network: {0}")]
    TapeMismatch(String),

    #[error("riccati solver failed: {0}")]
    Riccati(String),

    #[error("incompatible port: {0}")]
    Port(String),

    #[error("training diverged at iteration {iteration}: {detail}")]
    Diverged { iteration: usize, detail: String },

    #[error("state became non-finite at step {step}: {detail}")]
    Abort { step: usize, detail: String },

    #[error("grid too large: {points} points (limit {limit})")]
    GridTooLarge { points: u128, limit: u128 },

    #[error("trace too short: {0} steps")]
    TraceTooShort(usize),

    #[error("checkpoint version mismatch: file has {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    #[error("environment kind mismatch: {0}")]
    KindMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short stable identifier used in machine-readable CLI error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Dimension { .. } => "dimension",
            Error::NonFinite(_) => "non_finite",
            Error::TapeMismatch(_) => "tape",
            Error::Riccati(_) => "riccati",
            Error::Port(_) => "port",
            Error::Diverged { .. } => "diverged",
            Error::Abort { .. } => "abort",
            Error::GridTooLarge { .. } => "grid_too_large",
            Error::TraceTooShort(_) => "trace_too_short",
            Error::Version { .. } => "version",
            Error::KindMismatch(_) => "kind_mismatch",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub(crate) fn dim_check(context: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension {
            context: context.to_string(),
            expected,
            got,
        });
    }
    Ok(())
}
