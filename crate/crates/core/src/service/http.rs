//! HTTP surface consumed by the authoring UI. JSON in and out, except
//! document upload (multipart) and edits (server-sent events).

use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::Deserialize;
use serde_json::{json, Value};

use super::{EditEvent, EditRequest, GenerationSource, Service, ServiceError};
use crate::gateway::{MediaType, PageImage};

const UPLOAD_LIMIT_BYTES: usize = 256 * 1024 * 1024;

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/documents", post(upload))
        .route("/documents/{id}", get(get_document))
        .route("/documents/{id}/analyze", post(analyze))
        .route("/coursewares", post(generate).get(list_coursewares))
        .route("/coursewares/{id}", get(get_courseware))
        .route("/coursewares/{id}/versions", get(list_versions))
        .route("/coursewares/{id}/versions/{number}", get(get_version))
        .route("/coursewares/{id}/rollback", post(rollback))
        .route("/coursewares/{id}/edits", post(edit))
        .layer(DefaultBodyLimit::max(UPLOAD_LIMIT_BYTES))
        .with_state(service)
}

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

pub fn status_for(e: &ServiceError) -> StatusCode {
    match e {
        ServiceError::PageLimitExceeded { .. } => StatusCode::PAYLOAD_TOO_LARGE,
        ServiceError::EmptyDocument | ServiceError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
        ServiceError::NotFound { .. } => StatusCode::NOT_FOUND,
        ServiceError::ManualInputRequired { .. }
        | ServiceError::InvalidKnowledge(_)
        | ServiceError::SelectorMiss => StatusCode::UNPROCESSABLE_ENTITY,
        ServiceError::StaleContext { .. } => StatusCode::CONFLICT,
        ServiceError::Gateway(_) | ServiceError::EditFailed { .. } => StatusCode::BAD_GATEWAY,
        ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

pub fn error_body(e: &ServiceError) -> Value {
    let mut error = json!({"code": e.code(), "message": e.to_string()});
    if let ServiceError::ManualInputRequired {
        document_id,
        page_count,
        ..
    } = e
    {
        error["document_id"] = json!(document_id);
        error["page_count"] = json!(page_count);
    }
    json!({ "error": error })
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (status_for(&self.0), Json(error_body(&self.0))).into_response()
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(ServiceError::InvalidRequest(msg.into()))
}

/// Runs a blocking service call off the async runtime.
async fn blocking<T: Send + 'static>(
    service: Arc<Service>,
    f: impl FnOnce(&Service) -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(move || f(&service))
        .await
        .map_err(|e| ApiError(ServiceError::InvalidRequest(format!("worker failed: {e}"))))?
        .map_err(ApiError)
}

async fn upload(
    State(svc): State<Arc<Service>>,
    mut multipart: Multipart,
) -> Result<Response, ApiError> {
    let mut pages = Vec::new();
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| bad_request(e.to_string()))?
    {
        let declared = field.content_type().and_then(MediaType::parse);
        let name = field.file_name().unwrap_or("page").to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| bad_request(e.to_string()))?
            .to_vec();
        let media_type = declared
            .or_else(|| MediaType::sniff(&bytes))
            .ok_or_else(|| bad_request(format!("{name}: only PNG and JPEG pages are accepted")))?;
        pages.push(PageImage { media_type, bytes });
    }
    let count = pages.len();
    let id = blocking(svc, move |s| s.upload_document(pages)).await?;
    Ok((
        StatusCode::CREATED,
        Json(json!({"document_id": id, "page_count": count})),
    )
        .into_response())
}

async fn get_document(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let doc = blocking(svc, move |s| s.get_document(&id)).await?;
    Ok(Json(json!({
        "document_id": doc.id,
        "page_count": doc.pages.len(),
        "created_at": doc.created_at,
        "knowledge": doc.knowledge,
    })))
}

async fn analyze(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let result = blocking(svc, move |s| s.analyze_document(&id)).await?;
    Ok(Json(serde_json::to_value(result).unwrap_or_default()))
}

async fn generate(
    State(svc): State<Arc<Service>>,
    Json(source): Json<GenerationSource>,
) -> Result<Response, ApiError> {
    let generated = blocking(svc, move |s| s.generate_courseware(source)).await?;
    Ok((StatusCode::CREATED, Json(generated)).into_response())
}

async fn list_coursewares(State(svc): State<Arc<Service>>) -> Result<Json<Value>, ApiError> {
    let ids = blocking(svc, |s| s.list_coursewares()).await?;
    Ok(Json(json!({ "coursewares": ids })))
}

async fn get_courseware(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let cw = blocking(svc, move |s| s.get_courseware(&id)).await?;
    Ok(Json(serde_json::to_value(cw).unwrap_or_default()))
}

async fn list_versions(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let versions = blocking(svc, move |s| s.list_versions(&id)).await?;
    Ok(Json(json!({ "versions": versions })))
}

async fn get_version(
    State(svc): State<Arc<Service>>,
    Path((id, number)): Path<(String, u32)>,
) -> Result<Json<Value>, ApiError> {
    let version = blocking(svc, move |s| {
        s.get_courseware(&id)?
            .version(number)
            .cloned()
            .ok_or(ServiceError::NotFound {
                kind: "version",
                id: format!("{id}@{number}"),
            })
    })
    .await?;
    Ok(Json(serde_json::to_value(version).unwrap_or_default()))
}

#[derive(Deserialize)]
struct RollbackBody {
    version: u32,
}

async fn rollback(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    Json(body): Json<RollbackBody>,
) -> Result<Json<Value>, ApiError> {
    let cw = blocking(svc, move |s| s.rollback(&id, body.version)).await?;
    Ok(Json(serde_json::to_value(cw).unwrap_or_default()))
}

fn sse_event(ev: &EditEvent) -> Event {
    Event::default()
        .event(ev.name())
        .data(serde_json::to_string(ev).unwrap_or_default())
}

/// Streams the edit session. Failures arrive as a final `error` event.
async fn edit(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    Json(request): Json<EditRequest>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let (tx, rx) = tokio::sync::mpsc::unbounded_channel::<EditEvent>();
    tokio::task::spawn_blocking(move || {
        let _ = svc.submit_edit(&id, &request, &mut |ev| {
            let _ = tx.send(ev.clone());
        });
    });
    let events = stream::unfold(rx, |mut rx| async move {
        rx.recv().await.map(|ev| (Ok(sse_event(&ev)), rx))
    });
    Sse::new(events).keep_alive(KeepAlive::default())
}
