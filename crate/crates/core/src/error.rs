use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Invalid(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("configuration {0} lies outside the domain")]
    OutsideDomain(String),

    #[error("time {t} outside horizon [0, {horizon}]")]
    OutsideHorizon { t: f64, horizon: f64 },

    #[error("CFL condition violated: dt = {dt} exceeds the stable bound {bound}")]
    Cfl { dt: f64, bound: f64 },

    #[error("target {0} is not a legal configuration at the terminal time")]
    IllegalTarget(String),

    #[error("start {0} collides with an obstacle")]
    IllegalStart(String),

    #[error("start {start} cannot reach the target within the horizon (value {value})")]
    Unreachable { start: String, value: f64 },

    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("corrupt value dump: {0}")]
    Corrupt(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
