use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical blow-up: non-finite state after t = {last_valid_time}")]
    Blowup { last_valid_time: f64 },

    #[error("POD basis is empty: snapshot matrix has no energy")]
    EmptyBasis,

    #[error("reduced Poisson operator is singular in window {window}")]
    SingularReducedPoisson { window: usize },

    #[error("tensor for window {window} needs {entries} entries, above the cap of {cap}")]
    TensorTooLarge {
        window: usize,
        entries: usize,
        cap: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("model integrity: {0}")]
    Model(String),

    #[error("relative error is undefined for a zero reference field")]
    ZeroReference,

    #[error("requested time {0} is outside the trajectory")]
    TimeOutOfRange(f64),

    #[error("malformed container {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("checksum mismatch for {0}")]
    Checksum(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn config<S: Into<String>>(msg: S) -> Error {
    Error::Config(msg.into())
}
