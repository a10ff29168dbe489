//! Orchestration of the pass valuation pipeline: configuration, stage
//! commands, caches and run manifests.

pub mod config;
pub mod manifest;
pub mod metrics;
pub mod pipeline;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{GameSet, RunConfig};
pub use manifest::Manifest;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("missing input {}", .0.display())]
    MissingInput(PathBuf),

    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl PipelineError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::MissingInput(_) | PipelineError::Usage(_) => 2,
            PipelineError::Config(_) => 3,
            PipelineError::Other(_) => 1,
        }
    }
}
