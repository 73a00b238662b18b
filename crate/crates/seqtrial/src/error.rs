use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("quadrature failed to converge at u = {at}: {reason}")]
    Quadrature { at: f64, reason: String },

    #[error("root search failed: {0}")]
    RootSearch(String),

    #[error("infeasible design: {0}")]
    Infeasible(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
