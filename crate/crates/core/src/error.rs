use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("steady-state solve failed (residual {residual:.3e}): {reason}")]
    SteadyState { residual: f64, reason: String },

    #[error("trajectory integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },

    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(String),

    #[error("fidelity {fidelity:e} with the steady state underflows at t = {time}")]
    FidelityUnderflow { fidelity: f64, time: f64 },

    #[error("no snapshot recorded at t = {0}")]
    MissingSnapshot(f64),

    #[error("entropy bookkeeping needs a finite temperature")]
    ZeroTemperature,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParams(_) | Error::Config(_) | Error::DimensionMismatch { .. } => 2,
            Error::InsufficientStatistics(_) => 4,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => 1,
            _ => 3,
        }
    }
}
