//! HTTP review service over a [`ReviewStore`].
//!
//! | Method | Path | Body / query | Response |
//! |---|---|---|---|
//! | GET | `/api/queue` | `status` (default `pending`), `page` (1-based), `per_page` | `QueuePage` |
//! | GET | `/api/item/{group_id}` | | `ReviewItem` |
//! | POST | `/api/decision` | `DecisionRequest` | updated `ReviewItem` |
//! | GET | `/api/agreement` | | `AgreementReport` |
//! | GET | `/api/scene/{scene_id}/topdown` | | `SceneTopDown` |
//! | GET | `/api/export` | | QARecord JSONL |
//! | GET | `/api/qualification` | | `QualificationChecklist` |
//! | GET | `/api/summary` | | status counts |
//!
//! Errors are `{"error": kind, "message": text}` with 400, 404, 409 or 500.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use sqa_forge_core::pipeline::ingest::to_jsonl;
use sqa_forge_core::pipeline::review::{now_ms, QualificationChecklist, StatusFilter};
use sqa_forge_core::pipeline::topdown::SceneTopDown;
use sqa_forge_core::pipeline::{DecisionRequest, ReviewStore};
use sqa_forge_core::ReviewError;

pub struct AppState {
    store: Mutex<ReviewStore>,
    qualification: QualificationChecklist,
}

impl AppState {
    pub fn new(store: ReviewStore, qualification: QualificationChecklist) -> Arc<Self> {
        Arc::new(Self {
            store: Mutex::new(store),
            qualification,
        })
    }

    fn store(&self) -> MutexGuard<'_, ReviewStore> {
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }
}

pub struct ApiError(ReviewError);

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (code, kind, message) = match self.0 {
            ReviewError::NotFound(m) => (StatusCode::NOT_FOUND, "not_found", m),
            ReviewError::Conflict(m) => (StatusCode::CONFLICT, "conflict", m),
            ReviewError::BadRequest(m) => (StatusCode::BAD_REQUEST, "bad_request", m),
            ReviewError::Log(m) => (StatusCode::INTERNAL_SERVER_ERROR, "log", m),
        };
        (code, Json(json!({ "error": kind, "message": message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Deserialize)]
pub struct QueueQuery {
    status: Option<String>,
    page: Option<usize>,
    per_page: Option<usize>,
}

async fn queue(State(st): State<Arc<AppState>>, Query(q): Query<QueueQuery>) -> Result<Response, ApiError> {
    let name = q.status.as_deref().unwrap_or("pending");
    let filter = StatusFilter::parse(name)
        .ok_or_else(|| ReviewError::BadRequest(format!("unknown status filter '{name}'")))?;
    let page = st.store().queue.page(filter, q.page.unwrap_or(1), q.per_page.unwrap_or(50));
    Ok(Json(page).into_response())
}

async fn item(State(st): State<Arc<AppState>>, Path(group_id): Path<String>) -> Result<Response, ApiError> {
    let store = st.store();
    let item = store
        .queue
        .item(&group_id)
        .ok_or_else(|| ReviewError::NotFound(format!("group {group_id}")))?;
    Ok(Json(item).into_response())
}

async fn decision(
    State(st): State<Arc<AppState>>,
    body: Result<Json<DecisionRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body.map_err(|e| ReviewError::BadRequest(e.body_text()))?;
    let mut store = st.store();
    let item = store.decide(req, now_ms())?;
    Ok(Json(item).into_response())
}

async fn agreement(State(st): State<Arc<AppState>>) -> Result<Response, ApiError> {
    Ok(Json(st.store().queue.agreement()).into_response())
}

async fn topdown(State(st): State<Arc<AppState>>, Path(scene_id): Path<String>) -> ApiResult<SceneTopDown> {
    let store = st.store();
    let scene = store
        .queue
        .scene(&scene_id)
        .ok_or_else(|| ReviewError::NotFound(format!("scene {scene_id}")))?;
    Ok(Json(SceneTopDown::of(scene)))
}

async fn export(State(st): State<Arc<AppState>>) -> Response {
    let body = to_jsonl(&st.store().queue.export());
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

async fn qualification(State(st): State<Arc<AppState>>) -> Json<QualificationChecklist> {
    Json(st.qualification.clone())
}

#[derive(Debug, Serialize)]
struct Summary {
    required_reviews: usize,
    statuses: std::collections::BTreeMap<&'static str, usize>,
}

async fn summary(State(st): State<Arc<AppState>>) -> Response {
    let store = st.store();
    Json(Summary {
        required_reviews: store.queue.required_reviews(),
        statuses: store.queue.status_counts(),
    })
    .into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/queue", get(queue))
        .route("/api/item/{group_id}", get(item))
        .route("/api/decision", post(decision))
        .route("/api/agreement", get(agreement))
        .route("/api/scene/{scene_id}/topdown", get(topdown))
        .route("/api/export", get(export))
        .route("/api/qualification", get(qualification))
        .route("/api/summary", get(summary))
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("review service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
