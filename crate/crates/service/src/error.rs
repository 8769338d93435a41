use adlift_core::engine::{EngineError, Experiment, Status};
use adlift_core::bandit::BanditError;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::{json, Value};

use crate::wire::{ErrorBody, ErrorReply};

/// An error response: HTTP status, machine-readable code, message and
/// optional structured details.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub http: StatusCode,
    pub code: String,
    pub message: String,
    pub details: Value,
    pub experiment: Option<(String, Status, u64)>,
}

impl ApiError {
    pub fn new(http: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            http,
            code: code.to_owned(),
            message: message.into(),
            details: Value::Null,
            experiment: None,
        }
    }

    pub fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", format!("no experiment {id:?}"))
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    pub fn about(mut self, exp: &Experiment) -> Self {
        self.experiment = Some((exp.id().to_owned(), exp.status(), exp.state().t()));
        self
    }

    pub fn reply(&self) -> ErrorReply {
        let (experiment_id, status, t) = match &self.experiment {
            Some((id, s, t)) => (Some(id.clone()), Some(*s), Some(*t)),
            None => (None, None, None),
        };
        ErrorReply {
            experiment_id,
            status,
            t,
            error: ErrorBody {
                code: self.code.clone(),
                message: self.message.clone(),
                details: self.details.clone(),
            },
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(err: EngineError) -> Self {
        let message = err.to_string();
        match err {
            EngineError::Validation(fields) => {
                let code = fields.first().map_or("InvalidConfig", |f| f.code.as_str()).to_owned();
                ApiError::bad_request(&code, message).with_details(json!({ "fields": fields }))
            }
            EngineError::InvalidTransition { from, command } => {
                ApiError::new(StatusCode::CONFLICT, "IllegalTransition", message)
                    .with_details(json!({ "from": from, "command": command }))
            }
            EngineError::ThresholdNotCrossed => {
                ApiError::new(StatusCode::CONFLICT, "ThresholdNotCrossed", message)
            }
            EngineError::InvalidStatus(status) => ApiError::new(StatusCode::CONFLICT, "NotRunning", message)
                .with_details(json!({ "status": status })),
            EngineError::Bandit(BanditError::InvalidLevel(_) | BanditError::TooFewDraws { .. }) => {
                ApiError::bad_request("InvalidQuery", message)
            }
            // Setup failures that only show up once the config is realised,
            // e.g. a p_hat table that does not close.
            EngineError::Audience(_) | EngineError::Bandit(_) | EngineError::Sim(_) => {
                ApiError::bad_request("InvalidConfig", message)
            }
            EngineError::Metric(_) | EngineError::CorruptSnapshot(_) | EngineError::StateMismatch(_) => {
                ApiError::internal(message)
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.http, Json(self.reply())).into_response()
    }
}
