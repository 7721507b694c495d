//! HTTP front end. Routing and validation live in [`crate::api::dispatch`];
//! this module only moves bytes.

use axum::body::Bytes;
use axum::http::{header, HeaderMap, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::{Json, Router};
use tokio::net::TcpListener;

use crate::api::dispatch;

pub const PORT_ENV: &str = "PPIPOWER_PORT";
pub const DEFAULT_PORT: u16 = 8080;

async fn handle(method: Method, uri: Uri, headers: HeaderMap, body: Bytes) -> Response {
    let content_type = headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok());
    let (status, value) = dispatch(method.as_str(), uri.path(), content_type, &body);
    let status = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, Json(value)).into_response()
}

pub fn router() -> Router {
    Router::new().fallback(handle)
}

/// Serve until the listener fails.
pub async fn serve(listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router()).await
}
