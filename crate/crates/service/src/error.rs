use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;

use affect_core::api::{codes, ErrorBody};

/// An error rendered as `{"error": {"code", "message"}}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::NOT_FOUND, code: codes::NOT_FOUND, message: message.into() }
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::CONFLICT, code: codes::CONFLICT, message: message.into() }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, code: codes::VALIDATION, message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, code: codes::INTERNAL, message: message.into() }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({}): {}", self.status, self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<affect_core::Error> for ApiError {
    fn from(e: affect_core::Error) -> Self {
        use affect_core::Error::*;
        match e {
            Io { .. } | Json(_) | Model(_) => ApiError::internal(e.to_string()),
            _ => ApiError::validation(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody::new(self.code, self.message))).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
