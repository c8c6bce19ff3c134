//! JSON over HTTP in front of [`AnnotationService`].

use std::sync::{Arc, RwLock};

use agepost_core::pipeline::QueryItem;
use agepost_core::Outcome;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::service::{AnnotationService, ServiceError};

pub type SharedService = Arc<RwLock<AnnotationService>>;

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateTaskRequest {
    pub query: QueryItem,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub ref_id: String,
    pub outcome: Outcome,
    pub annotator_id: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FinalizeRequest {
    #[serde(default)]
    pub force: bool,
}

#[derive(Debug, Default, Deserialize)]
pub struct ExportParams {
    #[serde(default)]
    pub include_discarded: bool,
}

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        Self(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self(ServiceError::InvalidRequest(e.body_text()))
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self(ServiceError::InvalidRequest(e.body_text()))
    }
}

fn status_of(e: &ServiceError) -> StatusCode {
    match e {
        ServiceError::UnknownTask(_) => StatusCode::NOT_FOUND,
        ServiceError::TaskClosed { .. }
        | ServiceError::OutOfOrderReference { .. }
        | ServiceError::DuplicateQuery { .. }
        | ServiceError::QueueNotExhausted { .. } => StatusCode::CONFLICT,
        ServiceError::UnknownReference(_)
        | ServiceError::InsufficientPool(_)
        | ServiceError::NoEvidence
        | ServiceError::DegenerateEvidence(_) => StatusCode::UNPROCESSABLE_ENTITY,
        ServiceError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
        ServiceError::Io(_) | ServiceError::Corrupt(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.0.code().to_string(),
            detail: self.0.to_string(),
        };
        (status_of(&self.0), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

// A poisoned lock means a handler panicked mid-request; the state itself is
// only ever changed after the log append succeeds, so it is still consistent.
fn read(svc: &SharedService) -> std::sync::RwLockReadGuard<'_, AnnotationService> {
    svc.read().unwrap_or_else(|p| p.into_inner())
}

fn write(svc: &SharedService) -> std::sync::RwLockWriteGuard<'_, AnnotationService> {
    svc.write().unwrap_or_else(|p| p.into_inner())
}

async fn create_task(
    State(svc): State<SharedService>,
    body: Result<Json<CreateTaskRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<crate::service::TaskView>), ApiError> {
    let Json(req) = body?;
    let view = write(&svc).create_task(req.query)?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_task(State(svc): State<SharedService>, Path(id): Path<String>) -> ApiResult<crate::service::TaskView> {
    Ok(Json(read(&svc).get_task(&id)?))
}

async fn next_comparison(
    State(svc): State<SharedService>,
    Path(id): Path<String>,
) -> ApiResult<crate::service::NextComparison> {
    Ok(Json(read(&svc).next_comparison(&id)?))
}

async fn submit(
    State(svc): State<SharedService>,
    Path(id): Path<String>,
    body: Result<Json<SubmitRequest>, JsonRejection>,
) -> ApiResult<crate::service::SubmitResponse> {
    let Json(req) = body?;
    Ok(Json(write(&svc).submit_comparison(
        &id,
        &req.ref_id,
        req.outcome,
        &req.annotator_id,
    )?))
}

async fn finalize(
    State(svc): State<SharedService>,
    Path(id): Path<String>,
    body: Option<Json<FinalizeRequest>>,
) -> ApiResult<agepost_core::pipeline::AnnotationRecord> {
    let force = body.is_some_and(|Json(r)| r.force);
    Ok(Json(write(&svc).finalize_task(&id, force)?))
}

async fn export(
    State(svc): State<SharedService>,
    params: Result<Query<ExportParams>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(params) = params?;
    let mut body = Vec::new();
    read(&svc)
        .export_jsonl(&mut body, params.include_discarded)
        .expect("writing to a Vec cannot fail");
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn healthz(State(svc): State<SharedService>) -> Json<serde_json::Value> {
    let s = read(&svc);
    Json(serde_json::json!({
        "status": "ok",
        "seq": s.state().seq,
        "tasks": s.state().order.len(),
        "pool": s.pool().len(),
    }))
}

pub fn router(svc: SharedService) -> Router {
    Router::new()
        .route("/tasks", post(create_task))
        .route("/tasks/{id}", get(get_task))
        .route("/tasks/{id}/next", get(next_comparison))
        .route("/tasks/{id}/comparisons", post(submit))
        .route("/tasks/{id}/finalize", post(finalize))
        .route("/export", get(export))
        .route("/healthz", get(healthz))
        .with_state(svc)
}
