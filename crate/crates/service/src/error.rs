use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use feedmatch::corpus::CorpusError;
use feedmatch::matcher::MatchError;
use feedmatch::metrics::MetricsError;
use serde::Serialize;
use serde_json::{json, Value};

use crate::log::LogError;

/// Error response body `{code, message, detail}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: &'static str,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    pub fn new(status: u16, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            detail: Value::Null,
        }
    }

    pub fn detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(400, "InvalidRequest", message)
    }

    pub fn unknown(kind: &str, id: &str) -> Self {
        Self::new(404, "UnknownItem", format!("unknown {kind} {id:?}")).detail(json!({ "kind": kind, "id": id }))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(500, "Internal", message)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", self.status, self.code, self.message)
    }
}

impl From<CorpusError> for ApiError {
    fn from(e: CorpusError) -> Self {
        let message = e.to_string();
        match e {
            CorpusError::MalformedRecord { record, .. } => {
                Self::new(400, "MalformedRecord", message).detail(json!({ "line": record }))
            }
            CorpusError::MissingRequiredField { record, field } => {
                Self::new(422, "MissingRequiredField", message).detail(json!({ "line": record, "field": field }))
            }
            CorpusError::DuplicateId { kind, id } => {
                Self::new(400, "DuplicateId", message).detail(json!({ "kind": kind, "id": id }))
            }
            CorpusError::ClassifierUnavailable { endpoint, .. } => {
                Self::new(502, "ClassifierUnavailable", message).detail(json!({ "endpoint": endpoint }))
            }
            CorpusError::Io(_) => Self::internal(message),
        }
    }
}

impl From<MatchError> for ApiError {
    fn from(e: MatchError) -> Self {
        let message = e.to_string();
        match e {
            MatchError::UnknownItem(id) => Self::new(404, "UnknownItem", message).detail(json!({ "id": id })),
            MatchError::EmptyIndex => Self::new(409, "EmptyIndex", message),
            MatchError::NoNouns(id) => Self::new(422, "NoNouns", message).detail(json!({ "id": id })),
            MatchError::ThresholdRequired => Self::new(422, "ThresholdRequired", message),
            MatchError::InvalidK => Self::new(422, "InvalidK", message),
            MatchError::InvalidThreshold(t) => {
                Self::new(422, "InvalidThreshold", message).detail(json!({ "threshold": t }))
            }
            MatchError::DuplicateId(id) => Self::new(400, "DuplicateId", message).detail(json!({ "id": id })),
            MatchError::Backend(_) => Self::new(500, "BackendError", message),
            MatchError::ZeroVector | MatchError::DimensionMismatch { .. } | MatchError::Persistence { .. } => {
                Self::internal(message)
            }
        }
    }
}

impl From<MetricsError> for ApiError {
    fn from(e: MetricsError) -> Self {
        let message = e.to_string();
        match e {
            MetricsError::EmptyEvaluation => Self::new(409, "EmptyEvaluation", message),
            MetricsError::InvalidK => Self::new(422, "InvalidK", message),
            MetricsError::BothSidesEmpty => Self::new(422, "BothSidesEmpty", message),
        }
    }
}

impl From<LogError> for ApiError {
    fn from(e: LogError) -> Self {
        Self::internal(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}
