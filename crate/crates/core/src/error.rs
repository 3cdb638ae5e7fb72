use thiserror::Error;

use crate::config::RuleViolation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("invalid flow {flow}: {reason}")]
    InvalidFlow { flow: String, reason: String },
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("no route from {src} to {dst}")]
    NoRoute { src: String, dst: String },
    #[error("invalid preemption configuration: {0}")]
    InvalidConfig(String),
    #[error("preemption configuration violates {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    RuleViolations(Vec<RuleViolation>),
    #[error("{0}")]
    Domain(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
