use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("XML parse error at byte {offset}: {message}")]
    Xml { offset: u64, message: String },

    #[error("request failed after {attempts} attempt(s): {message}")]
    Retryable { attempts: u32, message: String },

    #[error("malformed service response: {message}")]
    MalformedResponse { message: String, raw: String },

    #[error("article rejected: {0}")]
    Rejected(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("destination already exists: {}", .0.display())]
    Collision(PathBuf),

    #[error("harvest failed: {0}")]
    Harvest(String),

    #[error("store error: {0}")]
    Store(#[from] rusqlite::Error),

    #[error("integrity violation in {relation}: {detail}")]
    Integrity { relation: String, detail: String },

    #[error("stage `{stage}` requires stage `{missing}` to have run first")]
    StageDependency { stage: String, missing: String },
}

impl Error {
    pub fn integrity(relation: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Integrity {
            relation: relation.into(),
            detail: detail.into(),
        }
    }
}
