use serde::Serialize;
use thiserror::Error;

/// Every failure the service reports, with a stable machine-readable code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServiceError {
    #[error("invalid payload: {message}")]
    InvalidPayload { field: Option<String>, message: String },
    #[error("{0}")]
    BadRequest(String),
    #[error("unknown conversation ids: {}", .0.join(", "))]
    UnknownConversations(Vec<String>),
    #[error("session {0} not found")]
    SessionNotFound(String),
    #[error("no unclaimed {mode} slot left for reviewer {reviewer}")]
    Exhausted { reviewer: String, mode: String },
    #[error("{0}")]
    Conflict(String),
    #[error("annotation rejected: {0}")]
    Validation(String),
    #[error("blind annotations outstanding: {}", .0.join(", "))]
    Incomplete(Vec<String>),
    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),
    #[error("unknown report kind {0:?}")]
    UnknownReport(String),
    #[error("no model loaded")]
    NoModel,
    #[error("event log: {0}")]
    Log(String),
    #[error("{0}")]
    Internal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub items: Vec<String>,
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::InvalidPayload { .. } => "invalid_payload",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::UnknownConversations(_) => "unknown_conversations",
            ServiceError::SessionNotFound(_) => "session_not_found",
            ServiceError::Exhausted { .. } => "exhausted",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::Validation(_) => "validation",
            ServiceError::Incomplete(_) => "incomplete",
            ServiceError::MissingPrerequisite(_) => "missing_prerequisite",
            ServiceError::UnknownReport(_) => "unknown_report",
            ServiceError::NoModel => "no_model",
            ServiceError::Log(_) => "event_log",
            ServiceError::Internal(_) => "internal",
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            ServiceError::InvalidPayload { .. } | ServiceError::Validation(_) => 422,
            ServiceError::BadRequest(_) | ServiceError::UnknownConversations(_) => 400,
            ServiceError::SessionNotFound(_) | ServiceError::UnknownReport(_) => 404,
            ServiceError::Exhausted { .. } => 410,
            ServiceError::Conflict(_) => 409,
            ServiceError::Incomplete(_) | ServiceError::MissingPrerequisite(_) => 412,
            ServiceError::NoModel => 503,
            ServiceError::Log(_) | ServiceError::Internal(_) => 500,
        }
    }

    pub fn body(&self) -> ErrorBody {
        let (field, items) = match self {
            ServiceError::InvalidPayload { field, .. } => (field.clone(), Vec::new()),
            ServiceError::UnknownConversations(ids) | ServiceError::Incomplete(ids) => (None, ids.clone()),
            _ => (None, Vec::new()),
        };
        ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
            field,
            items,
        }
    }
}
