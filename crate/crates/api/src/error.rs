use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

use corpusforge_core::analytics::AnalyticsError;
use corpusforge_core::domain::ReviewError;
use corpusforge_core::ledger::LedgerError;
use corpusforge_core::workflow::WorkflowError;

use crate::session::AuthError;

/// An error response: `{"error": <code>, "message": <text>}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.code, "message": self.message });
        (self.status, Json(body)).into_response()
    }
}

impl From<AuthError> for ApiError {
    fn from(e: AuthError) -> Self {
        let (status, code) = match e {
            AuthError::Unauthenticated => (StatusCode::UNAUTHORIZED, "unauthenticated"),
            AuthError::Expired => (StatusCode::UNAUTHORIZED, "expired"),
            AuthError::Forbidden { .. } => (StatusCode::FORBIDDEN, "forbidden"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<WorkflowError> for ApiError {
    fn from(e: WorkflowError) -> Self {
        use StatusCode as S;
        use WorkflowError as W;
        let (status, code) = match &e {
            W::Forbidden { .. } => (S::FORBIDDEN, "forbidden"),
            W::InvalidCredential => (S::UNAUTHORIZED, "invalid_credential"),
            W::EmptyBatch => (S::UNPROCESSABLE_ENTITY, "empty_batch"),
            W::InvalidBatchId(_) => (S::UNPROCESSABLE_ENTITY, "invalid_batch_id"),
            W::BlankSourceText { .. } => (S::UNPROCESSABLE_ENTITY, "blank_source_text"),
            W::InvalidId(_) => (S::UNPROCESSABLE_ENTITY, "invalid_id"),
            W::InvalidLease => (S::UNPROCESSABLE_ENTITY, "invalid_lease"),
            W::BlankTranslation => (S::UNPROCESSABLE_ENTITY, "blank_translation"),
            W::EmptyAudio => (S::UNPROCESSABLE_ENTITY, "empty_audio"),
            W::NotClaimant(_) => (S::CONFLICT, "not_claimant"),
            W::LeaseExpired(_) => (S::CONFLICT, "lease_expired"),
            W::Review(ReviewError::AlreadyReviewed(_)) => (S::CONFLICT, "already_reviewed"),
            W::Review(ReviewError::EmptyFlagComment) => (S::UNPROCESSABLE_ENTITY, "empty_flag_comment"),
            W::Review(ReviewError::SelfReview) => (S::FORBIDDEN, "self_review"),
            W::Ledger(LedgerError::NonPositiveAmount) => (S::UNPROCESSABLE_ENTITY, "non_positive_amount"),
            W::Ledger(LedgerError::InsufficientPool { .. }) => (S::CONFLICT, "insufficient_pool"),
            W::Ledger(LedgerError::ExceedsOwed { .. }) => (S::CONFLICT, "exceeds_owed"),
            W::Ledger(LedgerError::DuplicateAccrual(_)) => (S::CONFLICT, "duplicate_accrual"),
            W::Ledger(LedgerError::SentenceNotApproved(_)) => (S::CONFLICT, "sentence_not_approved"),
            W::Ledger(LedgerError::OutOfSequence { .. }) => (S::INTERNAL_SERVER_ERROR, "ledger_sequence"),
            W::NotFound { .. } => (S::NOT_FOUND, "not_found"),
            W::AlreadyExists { .. } => (S::CONFLICT, "already_exists"),
            W::VersionConflict { .. } => (S::CONFLICT, "version_conflict"),
            W::IllegalTransition { .. } => (S::CONFLICT, "illegal_transition"),
            W::Analytics(AnalyticsError::UnknownBatch(_)) => (S::NOT_FOUND, "unknown_batch"),
            W::Analytics(AnalyticsError::Sus(_)) => (S::UNPROCESSABLE_ENTITY, "invalid_sus"),
            W::Store(_) => (S::INTERNAL_SERVER_ERROR, "storage"),
        };
        if status.is_server_error() {
            tracing::error!(error = %e, "request failed");
        }
        ApiError::new(status, code, e.to_string())
    }
}
