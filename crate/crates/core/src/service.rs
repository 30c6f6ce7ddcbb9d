//! Stateless HTTP/JSON API over an [`Explorer`].

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tokio::net::TcpListener;
use tower_http::compression::CompressionLayer;
use tower_http::cors::{Any, CorsLayer};

use crate::api;
use crate::error::Error;
use crate::summarize::Explorer;

pub const DEFAULT_PORT: u16 = 8124;
pub const INDEX_DIR_ENV: &str = "EXLENS_INDEX_DIR";

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::Length { .. } => (StatusCode::BAD_REQUEST, "length"),
            Error::InvalidMask { .. } => (StatusCode::BAD_REQUEST, "invalid_mask"),
            Error::EmptySelection(_) => (StatusCode::BAD_REQUEST, "empty_selection"),
            Error::Bounds { .. } => (StatusCode::BAD_REQUEST, "out_of_range"),
            Error::Query(_) | Error::Dimension(_) => (StatusCode::BAD_REQUEST, "invalid_query"),
            Error::DegenerateQuery => (StatusCode::BAD_REQUEST, "degenerate_query"),
            Error::NoCandidate => (StatusCode::BAD_REQUEST, "no_candidate"),
            Error::EmptyInput(_) => (StatusCode::UNPROCESSABLE_ENTITY, "empty_input"),
            Error::Incompatible { .. } => (StatusCode::CONFLICT, "incompatible_index"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({
            "error": { "code": self.code, "message": self.message }
        });
        json_response(self.status, &body)
    }
}

fn json_response<T: Serialize>(status: StatusCode, value: &T) -> Response {
    match serde_json::to_vec(value) {
        Ok(bytes) => (
            status,
            [(
                header::CONTENT_TYPE,
                HeaderValue::from_static("application/json"),
            )],
            bytes,
        )
            .into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_json", e.to_string()))
}

/// Runs CPU-bound work off the async executor.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, Error> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

type AppState = Arc<Explorer>;

async fn analyze(State(explorer): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let request: api::AnalyzeRequest = parse_body(&body)?;
    let response = blocking(move || api::analyze(explorer.model(), &request)).await?;
    Ok(json_response(StatusCode::OK, &response))
}

async fn search(State(explorer): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let request: api::SearchRequest = parse_body(&body)?;
    let response = blocking(move || api::search_request(&explorer, &request)).await?;
    Ok(json_response(StatusCode::OK, &response))
}

async fn sentence(
    State(explorer): State<AppState>,
    Path(id): Path<usize>,
) -> Result<Response, ApiError> {
    api::sentence(&explorer, id)
        .map(|s| json_response(StatusCode::OK, &s))
        .ok_or_else(|| {
            ApiError::new(
                StatusCode::NOT_FOUND,
                "not_found",
                format!("no sentence {id}"),
            )
        })
}

async fn info(State(explorer): State<AppState>) -> Response {
    json_response(StatusCode::OK, &api::info(&explorer))
}

/// The API routes with CORS (any origin unless `cors_origin` is given) and
/// transport compression.
pub fn router(explorer: Arc<Explorer>, cors_origin: Option<&str>) -> Router {
    let cors = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    let cors = match cors_origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(origin) => cors.allow_origin(origin),
        None => cors.allow_origin(Any),
    };
    Router::new()
        .route("/api/analyze", post(analyze))
        .route("/api/search", post(search))
        .route("/api/corpus/sentence/:id", get(sentence))
        .route("/api/info", get(info))
        .with_state(explorer)
        .layer(cors)
        .layer(CompressionLayer::new())
}

/// Serves `router` on an already bound listener until the future resolves.
pub async fn serve(
    listener: TcpListener,
    router: Router,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router)
        .with_graceful_shutdown(shutdown)
        .await
}

pub async fn bind(host: &str, port: u16) -> std::io::Result<(TcpListener, SocketAddr)> {
    let listener = TcpListener::bind((host, port)).await?;
    let addr = listener.local_addr()?;
    Ok((listener, addr))
}
