use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

use activeeval_core::engine::TrialRequest;
use activeeval_core::{Error as CoreError, Suggestion};

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown campaign '{0}'")]
    UnknownCampaign(String),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("bad request: {0}")]
    BadRequest(String),

    #[error("idempotency key '{0}' was used with a different request")]
    DuplicateIdempotencyKey(String),

    #[error("warm-start outcomes are still outstanding")]
    PendingOutcomes { suggestion: Box<Suggestion> },

    #[error("stale suggestion token '{token}'")]
    StaleSuggestion { token: String, current: String },

    #[error("{0}")]
    Unprocessable(String),

    #[error("corrupt event log: {0}")]
    CorruptLog(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl ServiceError {
    pub(crate) fn io(context: impl std::fmt::Display, source: std::io::Error) -> Self {
        ServiceError::Io {
            context: context.to_string(),
            source,
        }
    }

    /// Maps an engine error raised while applying outcomes.
    pub(crate) fn from_record(e: CoreError) -> Self {
        match e {
            CoreError::StaleSuggestion { token, current } => ServiceError::StaleSuggestion {
                token,
                current: current.to_string(),
            },
            CoreError::WrongOutcomeCount { .. } | CoreError::OutOfDomainOutcome { .. } => {
                ServiceError::Unprocessable(e.to_string())
            }
            other => ServiceError::Core(other),
        }
    }

    fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownCampaign(_) => "UnknownCampaign",
            ServiceError::InvalidSpec(_) => "InvalidSpec",
            ServiceError::BadRequest(_) => "BadRequest",
            ServiceError::DuplicateIdempotencyKey(_) => "DuplicateIdempotencyKey",
            ServiceError::PendingOutcomes { .. } => "PendingOutcomes",
            ServiceError::StaleSuggestion { .. } => "StaleSuggestion",
            ServiceError::Unprocessable(_) => "InvalidOutcomes",
            ServiceError::CorruptLog(_) => "CorruptLog",
            ServiceError::Core(_) | ServiceError::Io { .. } => "Internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownCampaign(_) => StatusCode::NOT_FOUND,
            ServiceError::InvalidSpec(_) | ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::DuplicateIdempotencyKey(_)
            | ServiceError::PendingOutcomes { .. }
            | ServiceError::StaleSuggestion { .. } => StatusCode::CONFLICT,
            ServiceError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::CorruptLog(_) | ServiceError::Core(_) | ServiceError::Io { .. } => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        let mut body = json!({ "error": self.code(), "message": self.to_string() });
        match &self {
            ServiceError::PendingOutcomes { suggestion } => {
                let missing: &[TrialRequest] = &suggestion.trials;
                body["missing"] = json!(missing);
                body["suggestion"] = json!(suggestion);
            }
            ServiceError::StaleSuggestion { current, .. } => {
                body["current_version"] = json!(current);
            }
            _ => {}
        }
        (status, Json(body)).into_response()
    }
}
