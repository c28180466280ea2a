use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::BackendKind;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("{kind} backend unavailable: {reason}")]
    Unavailable { kind: BackendKind, reason: String },
    #[error("{kind} backend timed out after {secs:.1}s")]
    Timeout { kind: BackendKind, secs: f64 },
    #[error("{kind} backend returned a malformed response: {reason}")]
    MalformedResponse { kind: BackendKind, reason: String },
    #[error("{kind} backend rejected the request ({code}): {message}")]
    Rejected { kind: BackendKind, code: ErrorCode, message: String },
    #[error("no foreground found")]
    NoForeground,
    #[error("instruction could not be parsed: {0:?}")]
    UnparsableInstruction(String),
    #[error("instruction names unknown anchors: {0:?}")]
    UnknownAnchor(Vec<String>),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] forge_core::Error),
}

pub type ClientResult<T> = std::result::Result<T, ClientError>;

/// Machine-readable error class carried in backend error bodies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    InvalidRequest,
    NoForeground,
    UnparsableInstruction,
    UnknownAnchor,
    Unavailable,
    Internal,
}

impl std::fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        f.write_str(&s)
    }
}

/// Wire form of an error: `{"error": {"code": ..., "message": ...}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: ErrorCode,
    pub message: String,
}

impl ClientError {
    pub fn code(&self) -> ErrorCode {
        match self {
            ClientError::NoForeground => ErrorCode::NoForeground,
            ClientError::UnparsableInstruction(_) => ErrorCode::UnparsableInstruction,
            ClientError::UnknownAnchor(_) => ErrorCode::UnknownAnchor,
            ClientError::InvalidRequest(_) | ClientError::Core(_) => ErrorCode::InvalidRequest,
            ClientError::Unavailable { .. } | ClientError::Timeout { .. } => ErrorCode::Unavailable,
            ClientError::Rejected { code, .. } => *code,
            ClientError::MalformedResponse { .. } | ClientError::Config(_) => ErrorCode::Internal,
        }
    }

    pub fn to_body(&self) -> ErrorBody {
        let message = match self {
            ClientError::Rejected { message, .. } => message.clone(),
            other => other.to_string(),
        };
        ErrorBody { error: ErrorDetail { code: self.code(), message } }
    }

    /// Rebuilds a local error from a remote error body.
    pub fn from_body(kind: BackendKind, body: ErrorBody) -> Self {
        match body.error.code {
            ErrorCode::NoForeground => ClientError::NoForeground,
            code => ClientError::Rejected { kind, code, message: body.error.message },
        }
    }
}
