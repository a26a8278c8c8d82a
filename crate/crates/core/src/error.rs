use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("data integrity error: {0}")]
    DataIntegrity(String),
    #[error("duplicate model id {0:?}")]
    DuplicateModel(String),
    #[error("unknown model id {0:?}")]
    UnknownModel(String),
    #[error("league has no frozen members to schedule against")]
    EmptyLeague,
    #[error("payoff matrix is disconnected; components: {0:?}")]
    Disconnected(Vec<Vec<String>>),
    #[error("nash solver hit its iteration cap ({iterations}) with exploitability {exploitability:.3e} > {epsilon:.1e}")]
    NoCertificate {
        iterations: usize,
        exploitability: f64,
        epsilon: f64,
    },
    #[error("non-finite loss: {0}")]
    NonFinite(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("watchdog: no rollout result within {0:?}")]
    Watchdog(std::time::Duration),
    #[error("corrupt state file {path}: {reason}")]
    CorruptState { path: PathBuf, reason: String },
    #[error("config hash mismatch on resume: state has {stored}, config has {actual}")]
    HashMismatch { stored: String, actual: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
