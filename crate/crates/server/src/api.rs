//! JSON HTTP API over a [`SessionStore`].

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use georegion::{Error, FieldError};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::session::{parse_with_path, ServiceError, SessionStore};

pub struct ApiError(ServiceError);

impl<E: Into<ServiceError>> From<E> for ApiError {
    fn from(e: E) -> Self {
        ApiError(e.into())
    }
}

/// HTTP status for a service error.
pub fn status_of(err: &ServiceError) -> StatusCode {
    match err {
        ServiceError::StaleGrid(_) => StatusCode::CONFLICT,
        ServiceError::Core(e) => match e.root() {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Validation(_) | Error::Parse { .. } | Error::Schema(_) | Error::Geometry(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            Error::Infeasible(_) | Error::Contract(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        },
    }
}

/// `{"error": {"kind", "message", "fields"?}}`, shared with the CLI.
pub fn error_body(err: &ServiceError) -> Value {
    let (kind, message, fields): (&str, String, &[FieldError]) = match err {
        ServiceError::StaleGrid(_) => ("stale_grid", err.to_string(), &[]),
        ServiceError::Core(e) => match e.root() {
            Error::Validation(f) => ("validation", "invalid request".to_string(), f.as_slice()),
            root => (e.kind(), root.to_string(), &[]),
        },
    };
    let mut body = json!({"kind": kind, "message": message});
    if !fields.is_empty() {
        body["fields"] = json!(fields);
    }
    if let ServiceError::Core(Error::Stage { stage, .. }) = err {
        body["stage"] = json!(stage);
    }
    json!({ "error": body })
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (status_of(&self.0), Json(error_body(&self.0))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Store = State<Arc<SessionStore>>;

/// Body parsing that reports field paths instead of axum's plain-text
/// rejections.
fn body<T: serde::de::DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    let value: Value = serde_json::from_slice(bytes)
        .map_err(|e| Error::Validation(vec![FieldError::new("", format!("malformed JSON: {e}"))]))?;
    Ok(parse_with_path(value)?)
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/suggestions", get(suggestions))
        .route("/sessions/{id}/config", put(put_config))
        .route("/sessions/{id}/runs", post(start_run))
        .route("/sessions/{id}/runs/{rid}", get(get_run))
        .route("/sessions/{id}/runs/{rid}/stages/{stage}", get(get_stage))
        .route("/sessions/{id}/runs/{rid}/regions.geojson", get(get_geojson))
        .route("/sessions/{id}/refine", post(refine))
        .route("/dataset/summary", get(dataset_summary))
        .with_state(store)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    study_area: String,
    hazard: String,
}

async fn create_session(State(store): Store, bytes: Bytes) -> ApiResult<Response> {
    let req: CreateSession = body(&bytes)?;
    let id = store.create_session(&req.study_area, &req.hazard)?;
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))).into_response())
}

async fn get_session(State(store): Store, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(store.session(&id)?).into_response())
}

async fn suggestions(State(store): Store, Path(id): Path<String>) -> ApiResult<Response> {
    let hazard = store.session(&id)?.hazard;
    let ranked = store.suggestions(&id)?;
    Ok(Json(json!({ "hazard": hazard, "suggestions": ranked })).into_response())
}

async fn dataset_summary(State(store): Store) -> Response {
    Json(store.dataset_summary()).into_response()
}

async fn put_config(State(store): Store, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Response> {
    let config: Value = body(&bytes)?;
    let revision = store.submit_config(&id, config).await?;
    Ok(Json(json!({ "revision": revision })).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StartRun {
    revision: usize,
}

async fn start_run(State(store): Store, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Response> {
    let req: StartRun = body(&bytes)?;
    let run_id = store.start_run(&id, req.revision).await?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "run_id": run_id }))).into_response())
}

async fn get_run(State(store): Store, Path((id, rid)): Path<(String, String)>) -> ApiResult<Response> {
    Ok(Json(store.run(&id, &rid)?).into_response())
}

async fn get_stage(
    State(store): Store,
    Path((id, rid, stage)): Path<(String, String, String)>,
) -> ApiResult<Response> {
    let bytes = store.stage(&id, &rid, &stage)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn get_geojson(State(store): Store, Path((id, rid)): Path<(String, String)>) -> ApiResult<Response> {
    let bytes = store.geojson(&id, &rid)?;
    Ok(([(header::CONTENT_TYPE, "application/geo+json")], bytes).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Refine {
    delta: Value,
}

async fn refine(State(store): Store, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Response> {
    let req: Refine = body(&bytes)?;
    let (revision, run_id) = store.refine(&id, req.delta).await?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "revision": revision, "run_id": run_id }))).into_response())
}
