use std::path::PathBuf;

use forge_clients::ClientError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Core(#[from] forge_core::Error),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("invalid annotations: {0}")]
    Annotations(String),
    #[error("scene has too few usable instances (need {needed}, found {found})")]
    TooFewInstances { needed: usize, found: usize },
    #[error("no instance appears in at least two frames")]
    InstanceMissing,
    #[error("inpainting failed: {0}")]
    InpaintFailure(#[source] ClientError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid job: {0}")]
    InvalidJob(String),
    #[error("stage {stage} failed: {source}")]
    Stage { stage: &'static str, source: Box<PipelineError> },
    #[error("output hashes differ from the previous run: {0:?}")]
    HashMismatch(Vec<String>),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> PipelineError {
    let path = path.into();
    move |source| PipelineError::Io { path, source }
}

pub(crate) fn json_err(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> PipelineError {
    let path = path.into();
    move |source| PipelineError::Json { path, source }
}
