//! HTTP interface for the platform.
//!
//! Each mutating endpoint authenticates the caller, decodes the body and
//! makes exactly one [`Platform`] call. Role rules live in the workflow;
//! the router checks roles up front only so callers get a 403 before their
//! body is parsed.

pub mod config;
pub mod error;
pub mod session;

use std::num::NonZeroUsize;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use corpusforge_core::clock::SystemClock;
use corpusforge_core::domain::{
    AttachmentId, AudioAttachment, Decision, Role, SentenceId, TranslationId, User, UserId,
};
use corpusforge_core::store::Store;
use corpusforge_core::workflow::{self, AudioUpload, ImportItem, Platform};

pub use config::ServerConfig;
pub use error::ApiError;
use session::{AuthError, Session, Sessions};

/// Largest accepted audio attachment.
pub const MAX_AUDIO_BYTES: usize = 10 * 1024 * 1024;
const MULTIPART_OVERHEAD: usize = 256 * 1024;

#[derive(Clone)]
pub struct AppState {
    pub platform: Arc<Platform>,
    pub sessions: Arc<Sessions>,
}

impl AppState {
    pub fn new(platform: Arc<Platform>) -> Self {
        let sessions = Sessions::new(platform.clock().clone(), session::DEFAULT_TTL_SECONDS);
        AppState {
            platform,
            sessions: Arc::new(sessions),
        }
    }

    /// Resolves the bearer token to a current user record.
    fn caller(&self, headers: &HeaderMap, required: Option<Role>) -> Result<User, ApiError> {
        let token = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or(AuthError::Unauthenticated)?;
        let session = self.sessions.authorize(token.trim(), required)?;
        self.platform
            .user(&session.user_id)
            .map_err(|_| AuthError::Unauthenticated.into())
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/auth/login", post(login))
        .route("/batches/{id}/import", post(import_batch))
        .route("/tasks/claim", post(claim_task))
        .route("/tasks", get(list_tasks))
        .route(
            "/sentences/{id}/translations",
            post(submit_translation).layer(DefaultBodyLimit::max(MAX_AUDIO_BYTES + MULTIPART_OVERHEAD)),
        )
        .route("/translations/{id}/review", post(review_translation))
        .route("/export", get(export))
        .route("/stats", get(stats))
        .route("/leaderboard", get(leaderboard))
        .route("/ledger/contributions", post(contribute))
        .route("/ledger/disbursements", post(disburse))
        .route("/ledger/balances", get(balances))
        .route("/sus", post(submit_sus))
        .route("/audio/{id}", get(audio))
        .with_state(state)
}

/// Opens the data directory and serves until the process is stopped. A
/// background task returns lapsed claims to the pool.
pub async fn serve(config: ServerConfig) -> std::io::Result<()> {
    let store = Store::open(&config.data_dir).map_err(std::io::Error::other)?;
    let platform = Arc::new(Platform::new(
        Arc::new(store),
        Arc::new(SystemClock),
        config.platform(),
    ));
    let sweep_every = Duration::from_secs(config.lease_seconds.clamp(1, 30));
    let sweeper = platform.clone();
    tokio::spawn(async move {
        let mut ticker = tokio::time::interval(sweep_every);
        loop {
            ticker.tick().await;
            let p = sweeper.clone();
            match tokio::task::spawn_blocking(move || p.expire_leases(p.now())).await {
                Ok(Ok(0)) => {}
                Ok(Ok(n)) => tracing::info!(released = n, "expired leases"),
                Ok(Err(e)) => tracing::warn!(error = %e, "lease sweep failed"),
                Err(e) => tracing::warn!(error = %e, "lease sweep panicked"),
            }
        }
    });
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(AppState::new(platform))).await
}

#[derive(Deserialize)]
struct LoginBody {
    user_id: UserId,
    secret: String,
}

async fn login(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<Session>> {
    let body: LoginBody = parse_json(&body)?;
    let user = blocking({
        let platform = state.platform.clone();
        move || Ok(platform.login(&body.user_id, &body.secret)?)
    })
    .await?;
    Ok(Json(state.sessions.issue(&user)))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ImportBody {
    Items(Vec<ImportItem>),
    Wrapped { items: Vec<ImportItem> },
}

async fn import_batch(
    State(state): State<AppState>,
    Path(batch_id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let actor = state.caller(&headers, Some(Role::Admin))?;
    let items = match parse_json(&body)? {
        ImportBody::Items(items) | ImportBody::Wrapped { items } => items,
    };
    let platform = state.platform.clone();
    let summary = blocking(move || Ok(platform.import_batch(&actor, &batch_id, &items)?)).await?;
    Ok(Json(summary))
}

#[derive(Deserialize, Default)]
struct ClaimBody {
    lease_seconds: Option<u64>,
}

#[derive(Serialize)]
struct ClaimResponse {
    sentence: Option<corpusforge_core::domain::Sentence>,
}

async fn claim_task(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<ClaimResponse>> {
    let actor = state.caller(&headers, Some(Role::Translator))?;
    let body: ClaimBody = if body.iter().all(u8::is_ascii_whitespace) {
        ClaimBody::default()
    } else {
        parse_json(&body)?
    };
    let platform = state.platform.clone();
    let lease = body.lease_seconds.unwrap_or(platform.config().lease_seconds);
    let sentence = blocking(move || Ok(platform.claim_next(&actor, lease)?)).await?;
    Ok(Json(ClaimResponse { sentence }))
}

async fn list_tasks(State(state): State<AppState>, headers: HeaderMap) -> ApiResult<impl IntoResponse> {
    let actor = state.caller(&headers, None)?;
    let platform = state.platform.clone();
    let tasks = blocking(move || Ok(platform.list_tasks(&actor))).await?;
    Ok(Json(tasks))
}

#[derive(Deserialize)]
struct SubmitBody {
    hula_text: String,
}

async fn read_submission(state: &AppState, request: Request) -> ApiResult<(String, Option<AudioUpload>)> {
    let is_multipart = request
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    if !is_multipart {
        let body = Bytes::from_request(request, state)
            .await
            .map_err(|e| ApiError::new(e.status(), "bad_request", e.body_text()))?;
        let body: SubmitBody = parse_json(&body)?;
        return Ok((body.hula_text, None));
    }

    let mut multipart = Multipart::from_request(request, state)
        .await
        .map_err(|e| ApiError::new(e.status(), "bad_request", e.body_text()))?;
    let multipart_error =
        |e: axum::extract::multipart::MultipartError| match e.status() {
            StatusCode::PAYLOAD_TOO_LARGE => ApiError::new(
                StatusCode::PAYLOAD_TOO_LARGE,
                "audio_too_large",
                format!("audio is limited to {MAX_AUDIO_BYTES} bytes"),
            ),
            status => ApiError::new(status, "bad_request", e.body_text()),
        };
    let mut text = None;
    let mut audio = None;
    while let Some(field) = multipart.next_field().await.map_err(multipart_error)? {
        match field.name() {
            Some("hula_text") => text = Some(field.text().await.map_err(multipart_error)?),
            Some("audio") => {
                let content_type = field
                    .content_type()
                    .unwrap_or("application/octet-stream")
                    .to_owned();
                let bytes = field.bytes().await.map_err(multipart_error)?;
                if bytes.len() > MAX_AUDIO_BYTES {
                    return Err(ApiError::new(
                        StatusCode::PAYLOAD_TOO_LARGE,
                        "audio_too_large",
                        format!("audio is limited to {MAX_AUDIO_BYTES} bytes"),
                    ));
                }
                audio = Some(AudioUpload {
                    content_type,
                    bytes: bytes.to_vec(),
                });
            }
            _ => {}
        }
    }
    let text = text.ok_or_else(|| ApiError::bad_request("missing hula_text field"))?;
    Ok((text, audio))
}

async fn submit_translation(
    State(state): State<AppState>,
    Path(sentence_id): Path<String>,
    headers: HeaderMap,
    request: Request,
) -> ApiResult<impl IntoResponse> {
    let actor = state.caller(&headers, Some(Role::Translator))?;
    let (text, audio) = read_submission(&state, request).await?;
    let platform = state.platform.clone();
    let id = SentenceId::new(sentence_id);
    let translation =
        blocking(move || Ok(platform.submit_translation(&actor, &id, &text, audio)?)).await?;
    Ok((StatusCode::CREATED, Json(translation)))
}

#[derive(Deserialize)]
struct ReviewBody {
    decision: Decision,
    #[serde(default)]
    comment: String,
}

async fn review_translation(
    State(state): State<AppState>,
    Path(translation_id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let actor = state.caller(&headers, Some(Role::Reviewer))?;
    let body: ReviewBody = parse_json(&body)?;
    let platform = state.platform.clone();
    let id = TranslationId::new(translation_id);
    let review = blocking(move || {
        Ok(platform.review_translation(&actor, &id, body.decision, &body.comment)?)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(review)))
}

#[derive(Deserialize)]
struct ExportQuery {
    #[serde(default)]
    mark: bool,
}

async fn export(
    State(state): State<AppState>,
    Query(query): Query<ExportQuery>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let actor = state.caller(&headers, Some(Role::Admin))?;
    let platform = state.platform.clone();
    let records = blocking(move || Ok(platform.export_approved(&actor, query.mark)?)).await?;
    let body = workflow::to_ndjson(&records);
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson; charset=utf-8")], body).into_response())
}

async fn stats(State(state): State<AppState>, headers: HeaderMap) -> ApiResult<impl IntoResponse> {
    state.caller(&headers, None)?;
    let platform = state.platform.clone();
    let report = blocking(move || Ok(platform.stats())).await?;
    Ok(Json(report))
}

#[derive(Deserialize)]
struct LeaderboardQuery {
    limit: Option<usize>,
}

async fn leaderboard(
    State(state): State<AppState>,
    Query(query): Query<LeaderboardQuery>,
    headers: HeaderMap,
) -> ApiResult<impl IntoResponse> {
    state.caller(&headers, None)?;
    let limit = NonZeroUsize::new(query.limit.unwrap_or(10))
        .ok_or_else(|| ApiError::bad_request("limit must be at least 1"))?;
    let platform = state.platform.clone();
    let rows = blocking(move || Ok(platform.leaderboard(limit))).await?;
    Ok(Json(rows))
}

#[derive(Deserialize)]
struct ContributionBody {
    member: UserId,
    amount_minor: u64,
}

async fn contribute(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let actor = state.caller(&headers, Some(Role::Admin))?;
    let body: ContributionBody = parse_json(&body)?;
    let platform = state.platform.clone();
    let entry = blocking(move || Ok(platform.contribute(&actor, &body.member, body.amount_minor)?)).await?;
    Ok((StatusCode::CREATED, Json(entry)))
}

#[derive(Deserialize)]
struct DisbursementBody {
    translator: UserId,
    amount_minor: u64,
}

async fn disburse(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let actor = state.caller(&headers, Some(Role::Admin))?;
    let body: DisbursementBody = parse_json(&body)?;
    let platform = state.platform.clone();
    let entry =
        blocking(move || Ok(platform.disburse(&actor, &body.translator, body.amount_minor)?)).await?;
    Ok((StatusCode::CREATED, Json(entry)))
}

async fn balances(State(state): State<AppState>, headers: HeaderMap) -> ApiResult<impl IntoResponse> {
    state.caller(&headers, Some(Role::Admin))?;
    Ok(Json(state.platform.balances()))
}

#[derive(Deserialize)]
struct SusBody {
    responses: Vec<u8>,
}

async fn submit_sus(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let actor = state.caller(&headers, None)?;
    let body: SusBody = parse_json(&body)?;
    let platform = state.platform.clone();
    let stored = blocking(move || Ok(platform.record_sus(&actor, &body.responses)?)).await?;
    Ok((StatusCode::CREATED, Json(stored)))
}

async fn audio(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    state.caller(&headers, None)?;
    let platform = state.platform.clone();
    let (meta, bytes) = blocking(move || {
        let store = platform.store();
        let meta = store
            .get::<AudioAttachment>(&id)
            .map_err(workflow::WorkflowError::from)?
            .payload;
        let bytes = store
            .get_blob(&AttachmentId::new(id))
            .map_err(workflow::WorkflowError::from)?;
        Ok((meta, bytes))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, meta.content_type)], bytes).into_response())
}
