// SPDX-License-Identifier: Apache-2.0

//! HTTP adapter: every request goes through [`crate::api::handle`].

use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::extract::{Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::Response;
use axum::Router;

use crate::api::{handle, ApiRequest, ApiResponse};
use crate::error::Error;
use crate::service::Olympus;

/// Largest request body accepted. JSON uploads carry base64, which inflates
/// the raw asset size by a third.
fn body_limit(svc: &Olympus) -> usize {
    let assets = svc.config().assets.max_bytes as usize;
    assets.saturating_add(assets / 2).saturating_add(1 << 20)
}

async fn dispatch(State(svc): State<Arc<Olympus>>, request: Request) -> Response {
    let (parts, body) = request.into_parts();
    let header = |name: header::HeaderName| {
        parts
            .headers
            .get(name)
            .and_then(|v| v.to_str().ok())
            .map(str::to_owned)
    };
    let bearer = header(header::AUTHORIZATION).map(|v| {
        v.strip_prefix("Bearer ")
            .or_else(|| v.strip_prefix("bearer "))
            .unwrap_or(&v)
            .to_owned()
    });
    let api = match to_bytes(body, body_limit(&svc)).await {
        Ok(bytes) => ApiRequest {
            method: parts.method.as_str().to_owned(),
            path: parts.uri.path().to_owned(),
            query: parts.uri.query().unwrap_or_default().to_owned(),
            bearer,
            content_type: header(header::CONTENT_TYPE),
            body: bytes.to_vec(),
        },
        Err(_) => {
            let limit = svc.config().assets.max_bytes;
            return into_response(ApiResponse::error(&Error::OversizeAsset {
                size: limit.saturating_add(1),
                limit,
            }));
        }
    };
    let worker = Arc::clone(&svc);
    let response = tokio::task::spawn_blocking(move || handle(&worker, &api))
        .await
        .unwrap_or_else(|e| ApiResponse::error(&Error::Storage(format!("request task failed: {e}"))));
    into_response(response)
}

fn into_response(api: ApiResponse) -> Response {
    let mut response = Response::new(Body::from(api.body));
    *response.status_mut() = StatusCode::from_u16(api.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    if let Ok(value) = HeaderValue::from_str(&api.content_type) {
        response.headers_mut().insert(header::CONTENT_TYPE, value);
    }
    response
}

pub fn router(svc: Arc<Olympus>) -> Router {
    Router::new().fallback(dispatch).with_state(svc)
}

/// Binds `0.0.0.0:port`, reporting an occupied port distinctly.
pub fn bind(port: u16) -> Result<TcpListener, Error> {
    let addr = SocketAddr::from(([0, 0, 0, 0], port));
    let listener = TcpListener::bind(addr).map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => Error::Conflict {
            message: format!("port {port} is already in use"),
            id: port.to_string(),
        },
        _ => Error::Storage(format!("cannot bind port {port}: {e}")),
    })?;
    listener.set_nonblocking(true)?;
    Ok(listener)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    svc: Arc<Olympus>,
    listener: TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::from_std(listener)?;
    axum::serve(listener, router(svc))
        .with_graceful_shutdown(shutdown)
        .await
}
