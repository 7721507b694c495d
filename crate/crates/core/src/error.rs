use thiserror::Error;

/// Errors produced by planning, calibration and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input `{field}`: {message}")]
    InvalidInput { field: &'static str, message: String },

    #[error("degenerate outcome: prevalence {0} gives zero outcome variance")]
    DegenerateOutcome(f64),

    #[error("degenerate moments: column `{column}` has zero sample variance")]
    DegenerateMoment { column: &'static str },

    #[error("target power is unattainable: effect size is zero")]
    UnattainablePower,

    #[error("no finite labeled sample suffices with N = {pool}; need N >= {min_pool}")]
    Infeasible { pool: u64, min_pool: u64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("solver did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("pilot data row {row}: {message}")]
    Csv { row: usize, message: String },
}

impl Error {
    pub(crate) fn invalid(field: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidInput { field, message: message.into() }
    }

    /// Stable short code used by the CLI and HTTP layers.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::InvalidInput { .. } => "invalid_input",
            Error::DegenerateOutcome(_) => "degenerate_outcome",
            Error::DegenerateMoment { .. } => "degenerate_moment",
            Error::UnattainablePower => "unattainable_power",
            Error::Infeasible { .. } => "infeasible",
            Error::Singular(_) => "singular",
            Error::NotConverged { .. } => "not_converged",
            Error::Config(_) => "config",
            Error::Csv { .. } => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Non-fatal conditions where a routine fell back to the classical design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Warning {
    /// The prediction variance is zero, so the tuning weight is set to 0.
    ZeroPredictionVariance,
    /// The estimated Wald variance is zero; the test does not reject.
    DegenerateTest,
}
