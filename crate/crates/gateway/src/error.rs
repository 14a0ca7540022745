use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use caris_core::conversation::ConversationError;
use caris_core::recorder::RecorderError;
use caris_core::tracker::{RegistryError, TrackerError};
use serde_json::json;

#[derive(Debug, Clone, PartialEq)]
pub enum ApiError {
    BadRequest(String),
    Forbidden(String),
    NotFound(String),
    Conflict(String),
    BadGateway(String),
    Unavailable(String),
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Forbidden(_) => StatusCode::FORBIDDEN,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::BadGateway(_) => StatusCode::BAD_GATEWAY,
            ApiError::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn message(&self) -> &str {
        match self {
            ApiError::BadRequest(m)
            | ApiError::Forbidden(m)
            | ApiError::NotFound(m)
            | ApiError::Conflict(m)
            | ApiError::BadGateway(m)
            | ApiError::Unavailable(m)
            | ApiError::Internal(m) => m,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(json!({ "error": self.message() }))).into_response()
    }
}

impl From<RecorderError> for ApiError {
    fn from(e: RecorderError) -> Self {
        match e {
            RecorderError::DisabledByScenario(_) => ApiError::Forbidden(e.to_string()),
            RecorderError::InvalidImage(_) | RecorderError::InvalidPayload(_) => ApiError::BadRequest(e.to_string()),
            RecorderError::SessionClosed => ApiError::Unavailable(e.to_string()),
            RecorderError::StorageError(_) | RecorderError::CorruptSession { .. } => ApiError::Internal(e.to_string()),
        }
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::UnknownPerson(_) => ApiError::NotFound(e.to_string()),
            RegistryError::EmptyLabel => ApiError::BadRequest(e.to_string()),
            _ => ApiError::Internal(e.to_string()),
        }
    }
}

impl From<TrackerError> for ApiError {
    fn from(e: TrackerError) -> Self {
        match e {
            TrackerError::NonMonotonicFrame { .. } => ApiError::Conflict(e.to_string()),
            TrackerError::InvalidDetection { .. } => ApiError::BadRequest(e.to_string()),
            TrackerError::Registry(r) => r.into(),
        }
    }
}

impl From<ConversationError> for ApiError {
    fn from(e: ConversationError) -> Self {
        match e {
            ConversationError::DisabledByScenario(_) => ApiError::Forbidden(e.to_string()),
            ConversationError::UnknownProvider(_)
            | ConversationError::EmptyPrompt
            | ConversationError::ImagesUnsupported(_) => ApiError::BadRequest(e.to_string()),
            ConversationError::ProviderUnavailable(_) => ApiError::BadGateway(e.to_string()),
            ConversationError::AdapterUnavailable(_) => ApiError::Unavailable(e.to_string()),
            ConversationError::Log(_) => ApiError::Internal(e.to_string()),
        }
    }
}

/// Parses a JSON body by hand so malformed input is always a 400 with a reason.
pub fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("malformed JSON: {e}")))
}
