//! JSON API and static hosting of the review UI.

use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::model::{EventPayload, SessionMode};
use crate::store::{load_predictions, parse_prediction_line, ModelOutputs, NextItem, ReviewError, ReviewStore};

#[derive(Debug, Clone, Default)]
pub struct ServerConfig {
    /// Built UI bundle. The bundled single-page fallback is served when unset
    /// or missing.
    pub ui_dir: Option<PathBuf>,
    /// Directory that `path` entries in session requests resolve against.
    /// Without it only inline records are accepted.
    pub inputs_dir: Option<PathBuf>,
}

#[derive(Clone)]
struct AppState {
    store: Arc<ReviewStore>,
    config: Arc<ServerConfig>,
}

#[derive(Debug, Deserialize)]
struct CreateSession {
    mode: SessionMode,
    #[serde(default)]
    seed: u64,
    models: Vec<ModelSpec>,
}

#[derive(Debug, Deserialize)]
struct ModelSpec {
    name: String,
    path: Option<PathBuf>,
    records: Option<Vec<serde_json::Value>>,
}

enum ApiError {
    Review(ReviewError),
    BadRequest(String),
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        ApiError::Review(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, message) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "bad_request", m),
            ApiError::Review(e) => {
                let (status, code) = match &e {
                    ReviewError::MismatchedIds { .. } => (StatusCode::BAD_REQUEST, "mismatched_ids"),
                    ReviewError::TooFewModels { .. } => (StatusCode::BAD_REQUEST, "too_few_models"),
                    ReviewError::DuplicateModel => (StatusCode::BAD_REQUEST, "duplicate_model"),
                    ReviewError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
                    ReviewError::WrongMode(_) => (StatusCode::CONFLICT, "wrong_mode"),
                    ReviewError::StaleItem { .. } => (StatusCode::CONFLICT, "stale_item"),
                    ReviewError::UnknownArm(_) => (StatusCode::BAD_REQUEST, "unknown_arm"),
                    ReviewError::InvalidEdit(_) => (StatusCode::BAD_REQUEST, "invalid_edit"),
                    ReviewError::Corpus(_) => (StatusCode::BAD_REQUEST, "invalid_records"),
                    ReviewError::Io { .. } | ReviewError::Corrupt { .. } => {
                        log::error!("{e}");
                        (StatusCode::INTERNAL_SERVER_ERROR, "internal")
                    }
                };
                let message = if status == StatusCode::INTERNAL_SERVER_ERROR {
                    "internal error".to_string()
                } else {
                    e.to_string()
                };
                (status, code, message)
            }
        };
        (status, Json(json!({ "error": code, "message": message }))).into_response()
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::BadRequest(format!("task failed: {e}")))?
}

fn resolve_input(base: Option<&Path>, rel: &Path) -> Result<PathBuf, ApiError> {
    let base = base.ok_or_else(|| ApiError::BadRequest("this server accepts inline records only".into()))?;
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return Err(ApiError::BadRequest("paths must be relative and stay inside the inputs directory".into()));
    }
    Ok(base.join(rel))
}

fn load_spec(spec: ModelSpec, inputs: Option<&Path>) -> Result<ModelOutputs, ApiError> {
    match (spec.path, spec.records) {
        (Some(path), None) => Ok(load_predictions(&spec.name, &resolve_input(inputs, &path)?)?),
        (None, Some(records)) => {
            let records = records
                .iter()
                .enumerate()
                .map(|(i, v)| parse_prediction_line(&v.to_string(), i + 1))
                .collect::<Result<Vec<_>, _>>()
                .map_err(ReviewError::from)?;
            Ok(ModelOutputs {
                model: spec.name,
                records,
            })
        }
        _ => Err(ApiError::BadRequest("each model needs exactly one of `path` or `records`".into())),
    }
}

async fn create_session(State(st): State<AppState>, Json(req): Json<CreateSession>) -> Result<Response, ApiError> {
    let inputs = st.config.inputs_dir.clone();
    let store = st.store.clone();
    let mode = req.mode;
    let (id, items) = blocking(move || {
        let outputs = req
            .models
            .into_iter()
            .map(|m| load_spec(m, inputs.as_deref()))
            .collect::<Result<Vec<_>, ApiError>>()?;
        let id = store.create_session(mode, &outputs, req.seed)?;
        let items = store.snapshot(&id)?.items.len();
        Ok((id, items))
    })
    .await?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "session_id": id, "mode": mode, "items": items })),
    )
        .into_response())
}

async fn next_item(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let store = st.store.clone();
    let sid = id.clone();
    let (next, mode) = blocking(move || Ok((store.next_item(&sid)?, store.snapshot(&sid)?.mode))).await?;
    Ok(match next {
        NextItem::Item(item) => Json(json!({ "status": "item", "mode": mode, "item": item })),
        NextItem::Done => Json(json!({ "status": "done", "mode": mode })),
    }
    .into_response())
}

async fn submit_event(
    State(st): State<AppState>,
    UrlPath((id, item_id)): UrlPath<(String, String)>,
    Json(payload): Json<EventPayload>,
) -> Result<Response, ApiError> {
    let store = st.store.clone();
    let ack = blocking(move || Ok(store.submit(&id, &item_id, payload)?)).await?;
    Ok(Json(json!({ "ack": true, "cursor": ack.cursor, "done": ack.done })).into_response())
}

async fn get_report(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let store = st.store.clone();
    let report = blocking(move || Ok(store.report(&id)?)).await?;
    Ok(Json(report).into_response())
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn fallback_index() -> Html<&'static str> {
    Html(crate::ui::INDEX_HTML)
}

pub fn router(store: Arc<ReviewStore>, config: ServerConfig) -> Router {
    let ui_dir = config.ui_dir.clone().filter(|d| d.join("index.html").is_file());
    let state = AppState {
        store,
        config: Arc::new(config),
    };
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/next", get(next_item))
        .route("/sessions/{id}/items/{item_id}/events", post(submit_event))
        .route("/sessions/{id}/report", get(get_report))
        .route("/healthz", get(healthz))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(fallback_index)),
    }
}

/// Serves until the process is stopped.
pub async fn serve(addr: std::net::SocketAddr, store: Arc<ReviewStore>, config: ServerConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("review service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store, config)).await
}
