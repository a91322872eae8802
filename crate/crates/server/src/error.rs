use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use langrid_core::instructions::SessionError;
use langrid_core::runner::RunError;

/// Error body: `{"error": {"code": "...", "message": "..."}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

#[derive(Serialize)]
struct Body<'a> {
    error: Inner<'a>,
}

#[derive(Serialize)]
struct Inner<'a> {
    code: &'a str,
    message: &'a str,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no {what} {id:?}"))
    }

    pub fn conflict(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body {
            error: Inner {
                code: self.code,
                message: &self.message,
            },
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        use SessionError::*;
        let (status, code) = match &e {
            EmptyPlan => (StatusCode::UNPROCESSABLE_ENTITY, "empty_plan"),
            EmptyStore => (StatusCode::UNPROCESSABLE_ENTITY, "empty_store"),
            Match(..) => (StatusCode::UNPROCESSABLE_ENTITY, "match_failed"),
            Planning(_) => (StatusCode::BAD_GATEWAY, "planning_failed"),
            NoGateway => (StatusCode::UNPROCESSABLE_ENTITY, "no_gateway"),
            RoundLimit(..) => (StatusCode::CONFLICT, "round_limit"),
            UnknownInstruction(_) => (StatusCode::NOT_FOUND, "unknown_instruction"),
            AlreadyConfirmed(_) => (StatusCode::CONFLICT, "already_confirmed"),
            File(_) => (StatusCode::UNPROCESSABLE_ENTITY, "session_file"),
            EnvironmentMismatch { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "environment_mismatch"),
            Encoder(_) => (StatusCode::UNPROCESSABLE_ENTITY, "encoder"),
            Store(_) => (StatusCode::UNPROCESSABLE_ENTITY, "store"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<RunError> for ApiError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Session(s) => s.into(),
            RunError::Config(_) | RunError::Env(_) | RunError::Incompatible(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_config", e.to_string())
            }
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "run_failed", other.to_string()),
        }
    }
}
