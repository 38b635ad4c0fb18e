//! JSON HTTP API over a [`SessionManager`].

use std::collections::HashSet;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::corpus::{chunk_all, ingest_str, SourceFormat, SourceKind};
use crate::pipeline::{PipelineError, SessionManager, SystemConfig, TurnRecord};
use crate::retrieval::{KnowledgeBase, SearchMode};

const MAX_SEARCH_K: usize = 50;

#[derive(Clone)]
pub struct AppState {
    pub manager: Arc<SessionManager>,
    /// Ingestion is refused when no token is configured.
    pub admin_token: Option<String>,
    pub max_chunk_words: usize,
}

impl AppState {
    pub fn new(manager: Arc<SessionManager>) -> Self {
        Self {
            manager,
            admin_token: None,
            max_chunk_words: crate::corpus::DEFAULT_MAX_CHUNK_WORDS,
        }
    }

    pub fn with_admin_token(mut self, token: Option<String>) -> Self {
        self.admin_token = token.filter(|t| !t.is_empty());
        self
    }
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let status = match e {
            PipelineError::SessionNotFound(_) => StatusCode::NOT_FOUND,
            PipelineError::EmptyUtterance | PipelineError::InvalidConfig(_) => StatusCode::UNPROCESSABLE_ENTITY,
            PipelineError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

fn unprocessable(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::UNPROCESSABLE_ENTITY, msg.into())
}

fn join_error(e: tokio::task::JoinError) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}"))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/messages", post(post_message))
        .route("/v1/search", get(search))
        .route("/v1/ingest", post(ingest))
        .with_state(state)
}

async fn healthz(State(state): State<AppState>) -> Json<Value> {
    let engine = &state.manager.engine;
    Json(json!({
        "status": "ok",
        "corpus_version": engine.knowledge.get().version,
        "provider": engine.defaults.provider,
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    #[serde(default)]
    config: Option<SystemConfig>,
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<Value>), ApiError> {
    let request: CreateSession = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSession { config: None }
    } else {
        serde_json::from_slice(&body).map_err(|e| unprocessable(format!("invalid config: {e}")))?
    };
    let manager = state.manager.clone();
    let session = tokio::task::spawn_blocking(move || manager.create_session(request.config))
        .await
        .map_err(join_error)??;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "session_id": session.session_id, "config": session.config })),
    ))
}

fn turn_view(turn: &TurnRecord) -> Value {
    let mut v = turn.api_view();
    v["user_utterance"] = json!(turn.user_utterance);
    v
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let session = state.manager.session(&id)?;
    Ok(Json(json!({
        "session_id": session.session_id,
        "created_at": session.created_at,
        "config": session.config,
        "turns": session.turns.iter().map(turn_view).collect::<Vec<_>>(),
    })))
}

#[derive(Deserialize)]
struct Message {
    text: String,
}

async fn post_message(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let message: Message = serde_json::from_slice(&body).map_err(|e| unprocessable(format!("invalid message: {e}")))?;
    let manager = state.manager.clone();
    let turn = tokio::task::spawn_blocking(move || manager.handle_turn(&id, &message.text))
        .await
        .map_err(join_error)??;
    Ok(Json(turn_view(&turn)))
}

#[derive(Deserialize)]
struct SearchParams {
    q: String,
    k: Option<usize>,
    mode: Option<String>,
}

async fn search(State(state): State<AppState>, Query(params): Query<SearchParams>) -> Result<Json<Value>, ApiError> {
    let k = params.k.unwrap_or(crate::pipeline::TOP_K);
    if k == 0 || k > MAX_SEARCH_K {
        return Err(unprocessable(format!("k must be in 1..={MAX_SEARCH_K}")));
    }
    let mode: SearchMode = match params.mode.as_deref() {
        Some(m) => m.parse().map_err(unprocessable)?,
        None => state.manager.engine.defaults.retriever,
    };
    let kb = state.manager.engine.knowledge.get();
    let results = kb.search(&params.q, k, mode).map_err(|e| unprocessable(e.to_string()))?;
    let items: Vec<Value> = results
        .iter()
        .map(|r| {
            json!({
                "paragraph_id": r.paragraph_id,
                "rank": r.rank,
                "score": r.score,
                "text": kb.paragraph(&r.paragraph_id).map(|p| p.text.as_str()),
            })
        })
        .collect();
    Ok(Json(json!({ "query": params.q, "mode": mode, "corpus_version": kb.version, "results": items })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IngestRequest {
    name: String,
    content: String,
    #[serde(default = "default_format")]
    format: SourceFormat,
    #[serde(default = "default_kind")]
    kind: SourceKind,
}

fn default_format() -> SourceFormat {
    SourceFormat::PlainText
}

fn default_kind() -> SourceKind {
    SourceKind::OwnersManual
}

fn authorize(state: &AppState, headers: &HeaderMap) -> Result<(), ApiError> {
    let Some(expected) = &state.admin_token else {
        return Err(ApiError(StatusCode::FORBIDDEN, "ingestion is disabled".into()));
    };
    let given = headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if given != Some(expected.as_str()) {
        return Err(ApiError(StatusCode::UNAUTHORIZED, "admin token required".into()));
    }
    Ok(())
}

/// Adds a source document to the live corpus and swaps in the rebuilt index.
async fn ingest(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Result<Json<Value>, ApiError> {
    authorize(&state, &headers)?;
    let request: IngestRequest = serde_json::from_slice(&body).map_err(|e| unprocessable(format!("invalid ingest request: {e}")))?;
    let engine = state.manager.engine.clone();
    let max_words = state.max_chunk_words;
    tokio::task::spawn_blocking(move || {
        let ingested = ingest_str(&request.name, &request.content, request.kind, request.format);
        let added = chunk_all(&ingested.documents, max_words).map_err(|e| unprocessable(e.to_string()))?;
        let current = engine.knowledge.get();
        let existing: HashSet<&str> = current.paragraphs().iter().map(|p| p.paragraph_id.as_str()).collect();
        if let Some(dup) = added.iter().find(|p| existing.contains(p.paragraph_id.as_str())) {
            return Err(ApiError(StatusCode::CONFLICT, format!("paragraph {} already exists", dup.paragraph_id)));
        }
        let added_count = added.len();
        let mut paragraphs = current.paragraphs().to_vec();
        paragraphs.extend(added);
        let options = current.build_options();
        let next = KnowledgeBase::build(paragraphs, current.embedder().clone(), options)
            .map_err(|e| unprocessable(e.to_string()))?;
        let version = engine.knowledge.swap(next);
        Ok(Json(json!({
            "report": ingested.report,
            "paragraphs_added": added_count,
            "corpus_version": version,
        })))
    })
    .await
    .map_err(join_error)?
}

/// Serves until Ctrl-C.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
