use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not unitary (max deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("time grid is invalid: {0}")]
    InvalidGrid(String),

    #[error("inadmissible correlation kernel: minimum eigenvalue {min_eigenvalue:.6e} (tolerance {tolerance:.3e})")]
    Inadmissible { min_eigenvalue: f64, tolerance: f64 },

    #[error("covariance factorization failed after jitter escalation up to {max_jitter:.3e}")]
    FactorizationFailed { max_jitter: f64 },

    #[error("closure precondition violated: {0}")]
    ClosurePrecondition(String),

    #[error("trajectory {trajectory} blew up at t={time} (norm {norm:.3e})")]
    BlowUp { trajectory: u64, time: f64, norm: f64 },

    #[error("{failed} of {total} trajectories blew up (first: trajectory {first})")]
    TooManyBlowUps { failed: usize, total: usize, first: u64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unknown preset '{0}'")]
    UnknownPreset(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
