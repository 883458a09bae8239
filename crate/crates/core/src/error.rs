use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("{family} window has no pointwise derivative of order {order}")]
    UnsupportedDerivative { family: &'static str, order: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("recurrence of order {order} failed: {reason}")]
    Recurrence { order: usize, reason: String },

    #[error("correction order {requested} requested but only {available} window derivative rows are available")]
    MissingDerivatives { requested: usize, available: usize },

    #[error("rank deficient regression: numerical rank {rank}, {needed} unknowns per output")]
    RankDeficient { rank: usize, needed: usize },

    #[error("integration step {dt} does not divide the output spacing {spacing}")]
    NotCommensurate { dt: f64, spacing: f64 },

    #[error("state became non-finite at t = {time}")]
    BlowUp { time: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed input file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidWindow(_) | Error::InvalidArgument(_) => 2,
            Error::UnsupportedDerivative { .. } => 2,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Format { .. } => 4,
            _ => 3,
        }
    }
}
