//! HTTP routes over [`ChatService`].

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

use crate::error::ServiceError;
use crate::service::ChatService;

pub struct ApiError(pub ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(ServiceError::BadRequest(e.body_text()))
    }
}

pub fn status_of(e: &ServiceError) -> StatusCode {
    match e {
        ServiceError::UnknownPolicy(_) | ServiceError::UnknownTask(_) | ServiceError::UnknownSession(_)
        | ServiceError::NoRoute(_) => {
            StatusCode::NOT_FOUND
        }
        ServiceError::SessionClosed(_) => StatusCode::CONFLICT,
        ServiceError::EmptyMessage | ServiceError::OutOfRangeRating(_) | ServiceError::BadRequest(_) => {
            StatusCode::BAD_REQUEST
        }
        ServiceError::ContextOverflow(_) => StatusCode::PAYLOAD_TOO_LARGE,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_of(&self.0);
        if status.is_server_error() {
            log::error!("{}", self.0);
        }
        let body = json!({"error": {"code": self.0.code(), "message": self.0.to_string()}});
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Shared = State<Arc<ChatService>>;

#[derive(Debug, Deserialize)]
pub struct StartRequest {
    pub task_id: String,
    pub policy_id: String,
}

#[derive(Debug, Deserialize)]
pub struct MessageRequest {
    pub text: String,
}

#[derive(Debug, Deserialize)]
pub struct RatingRequest {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

async fn policies(State(svc): Shared) -> Json<Value> {
    Json(json!({"policies": svc.policies()}))
}

async fn start(State(svc): Shared, body: Result<Json<StartRequest>, JsonRejection>) -> ApiResult<impl IntoResponse> {
    let Json(req) = body?;
    let started = svc.start_session(&req.task_id, &req.policy_id)?;
    Ok((StatusCode::CREATED, Json(started)))
}

async fn message(
    State(svc): Shared,
    Path(id): Path<String>,
    body: Result<Json<MessageRequest>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Json(req) = body?;
    let reply = svc.post_message(&id, &req.text).await?;
    Ok(Json(json!({"reply": reply})))
}

async fn transcript(State(svc): Shared, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(serde_json::to_value(svc.session(&id).await?).map_err(ServiceError::from)?))
}

async fn rating(
    State(svc): Shared,
    Path(id): Path<String>,
    body: Result<Json<RatingRequest>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Json(r) = body?;
    svc.submit_rating(&id, [r.a, r.b, r.c, r.d]).await?;
    Ok(Json(json!({"ok": true})))
}

async fn no_route(uri: Uri) -> ApiError {
    ApiError(ServiceError::NoRoute(uri.path().to_string()))
}

pub fn router(svc: Arc<ChatService>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/policies", get(policies))
        .route("/sessions", post(start))
        .route("/sessions/{id}", get(transcript))
        .route("/sessions/{id}/messages", post(message))
        .route("/sessions/{id}/rating", post(rating))
        .with_state(svc);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(no_route),
    }
}

/// Serve until the process is stopped.
pub async fn serve(svc: Arc<ChatService>, listener: TcpListener, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let addr: SocketAddr = listener.local_addr()?;
    log::info!("listening on http://{addr}");
    axum::serve(listener, router(svc, static_dir)).await
}
