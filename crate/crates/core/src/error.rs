use thiserror::Error;

use crate::model::PacketId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("packet {0} inserted while already resident (router {1})")]
    AlreadyResident(PacketId, u32),

    #[error("protocol invariant violated at router {router}, t={time}: {message}")]
    Protocol { router: u32, time: f64, message: String },

    #[error("simulation aborted: {message}\nrecent events:\n{trace}")]
    Aborted { message: String, trace: String },

    #[error("invalid popularity vector: {0}")]
    Popularity(String),

    #[error("enumeration too large: n={n}, c={c} (limit n <= {limit})")]
    EnumerationTooLarge { n: usize, c: usize, limit: usize },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("topology: {0}")]
    Topology(String),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("trace line {line}: {message}")]
    Trace { line: usize, message: String },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
