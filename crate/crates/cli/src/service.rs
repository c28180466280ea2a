//! Local HTTP service: `/api/*` for interactive placement, `/v1/{kind}` for
//! the backend protocol, and optional static files under `/studio`.
//!
//! Handlers are stateless apart from the backend clients; pipeline work runs
//! on the blocking pool.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Component, Path as FsPath, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use forge_clients::protocol::{handle, inline_parts};
use forge_clients::{http::REQUEST_PART, BackendKind, Backends, ClientError, ErrorBody, ErrorCode, ErrorDetail};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;

use crate::api::{self, ApiError};

/// Largest accepted request body.
pub const BODY_LIMIT: usize = 256 << 20;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("port {} is already in use on {}", .0.port(), .0.ip())]
    PortInUse(SocketAddr),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("service runtime: {0}")]
    Runtime(#[from] std::io::Error),
}

pub struct AppState {
    pub backends: Backends,
    pub studio_dir: Option<PathBuf>,
}

fn status_for(code: ErrorCode) -> StatusCode {
    match code {
        ErrorCode::InvalidRequest => StatusCode::BAD_REQUEST,
        ErrorCode::NoForeground | ErrorCode::UnparsableInstruction | ErrorCode::UnknownAnchor => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        ErrorCode::Unavailable => StatusCode::SERVICE_UNAVAILABLE,
        ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn error_response(body: ErrorBody) -> Response {
    (status_for(body.error.code), Json(body)).into_response()
}

fn plain_error(code: ErrorCode, message: impl Into<String>) -> Response {
    error_response(ErrorBody { error: ErrorDetail { code, message: message.into() } })
}

/// Parses the body, runs `f` on the blocking pool and serializes its result.
async fn run_blocking<Req, Resp, F>(state: Arc<AppState>, body: Bytes, f: F) -> Response
where
    Req: DeserializeOwned + Send + 'static,
    Resp: Serialize + Send + 'static,
    F: FnOnce(&AppState, Req) -> Result<Resp, ApiError> + Send + 'static,
{
    let req: Req = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error_response(ApiError::BadRequest(e.to_string()).to_body()),
    };
    match tokio::task::spawn_blocking(move || f(&state, req)).await {
        Ok(Ok(resp)) => Json(resp).into_response(),
        Ok(Err(e)) => {
            log::warn!("request failed: {e}");
            error_response(e.to_body())
        }
        Err(e) => plain_error(ErrorCode::Internal, e.to_string()),
    }
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

async fn fuse(State(s): State<Arc<AppState>>, body: Bytes) -> Response {
    run_blocking(s, body, |_, r: api::FuseRequest| api::fuse(&r)).await
}

async fn detail_map(State(s): State<Arc<AppState>>, body: Bytes) -> Response {
    run_blocking(s, body, |_, r: api::DetailRequest| api::detail_map(&r)).await
}

async fn collage(State(s): State<Arc<AppState>>, body: Bytes) -> Response {
    run_blocking(s, body, |_, r: api::CollageRequest| api::collage(&r)).await
}

async fn augment_mask(State(s): State<Arc<AppState>>, body: Bytes) -> Response {
    run_blocking(s, body, |_, r: api::AugmentRequest| api::augment_mask(&r)).await
}

async fn locate(State(s): State<Arc<AppState>>, body: Bytes) -> Response {
    run_blocking(s, body, |st: &AppState, r: api::LocateRequest| api::locate(&st.backends, &r)).await
}

async fn compose(State(s): State<Arc<AppState>>, body: Bytes) -> Response {
    run_blocking(s, body, |st: &AppState, r: api::ComposeRequest| api::compose(&st.backends, &r)).await
}

async fn export_bundle(State(s): State<Arc<AppState>>, body: Bytes) -> Response {
    run_blocking(s, body, |st: &AppState, r: api::ComposeRequest| api::export_bundle(&st.backends, &r)).await
}

/// Reads a multipart request: the JSON `request` part plus binary parts it references.
async fn read_multipart(mut mp: Multipart) -> Result<serde_json::Value, ClientError> {
    let bad = |e: axum::extract::multipart::MultipartError| ClientError::InvalidRequest(e.to_string());
    let mut request = None;
    let mut parts = HashMap::new();
    while let Some(field) = mp.next_field().await.map_err(bad)? {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field.bytes().await.map_err(bad)?;
        if name == REQUEST_PART {
            request = Some(serde_json::from_slice(&bytes).map_err(|e| ClientError::InvalidRequest(e.to_string()))?);
        } else {
            parts.insert(name, bytes.to_vec());
        }
    }
    let mut request = request.ok_or_else(|| ClientError::InvalidRequest(format!("missing {REQUEST_PART:?} part")))?;
    inline_parts(&mut request, &parts)?;
    Ok(request)
}

async fn backend(State(s): State<Arc<AppState>>, Path(kind): Path<String>, req: Request) -> Response {
    let Ok(kind) = kind.parse::<BackendKind>() else {
        return (
            StatusCode::NOT_FOUND,
            Json(ClientError::InvalidRequest(format!("unknown backend {kind:?}")).to_body()),
        )
            .into_response();
    };
    let multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let value = if multipart {
        match Multipart::from_request(req, &()).await {
            Ok(mp) => read_multipart(mp).await,
            Err(e) => Err(ClientError::InvalidRequest(e.body_text())),
        }
    } else {
        match Bytes::from_request(req, &()).await {
            Ok(b) => serde_json::from_slice(&b).map_err(|e| ClientError::InvalidRequest(e.to_string())),
            Err(e) => Err(ClientError::InvalidRequest(e.body_text())),
        }
    };
    let value = match value {
        Ok(v) => v,
        Err(e) => return error_response(e.to_body()),
    };
    match tokio::task::spawn_blocking(move || handle(&s.backends, kind, value)).await {
        Ok(Ok(v)) => Json(v).into_response(),
        Ok(Err(e)) => error_response(e.to_body()),
        Err(e) => plain_error(ErrorCode::Internal, e.to_string()),
    }
}

fn content_type(path: &FsPath) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("wasm") => "application/wasm",
        _ => "application/octet-stream",
    }
}

async fn studio_file(state: &AppState, rel: &str) -> Response {
    let Some(root) = &state.studio_dir else {
        return plain_error(ErrorCode::InvalidRequest, "studio assets are not configured");
    };
    let rel = FsPath::new(if rel.is_empty() { "index.html" } else { rel });
    // only plain relative paths, so requests cannot leave the asset root
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return plain_error(ErrorCode::InvalidRequest, "invalid asset path");
    }
    let path = root.join(rel);
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

async fn studio_index(State(s): State<Arc<AppState>>) -> Response {
    studio_file(&s, "").await
}

async fn studio_asset(State(s): State<Arc<AppState>>, Path(rel): Path<String>) -> Response {
    studio_file(&s, &rel).await
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/fuse", post(fuse))
        .route("/api/detail-map", post(detail_map))
        .route("/api/collage", post(collage))
        .route("/api/augment-mask", post(augment_mask))
        .route("/api/locate", post(locate))
        .route("/api/compose", post(compose))
        .route("/api/export-bundle", post(export_bundle))
        .route("/v1/{kind}", post(backend))
        .route("/studio", get(studio_index))
        .route("/studio/", get(studio_index))
        .route("/studio/{*path}", get(studio_asset))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

pub async fn bind(addr: SocketAddr) -> Result<TcpListener, ServiceError> {
    TcpListener::bind(addr).await.map_err(|source| {
        if source.kind() == std::io::ErrorKind::AddrInUse {
            ServiceError::PortInUse(addr)
        } else {
            ServiceError::Bind { addr, source }
        }
    })
}

/// Serves on a background thread with its own runtime until dropped.
pub struct RunningServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl RunningServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Binds `addr` (port 0 picks a free port) and starts serving.
pub fn start(state: AppState, addr: SocketAddr) -> Result<RunningServer, ServiceError> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let listener = rt.block_on(bind(addr))?;
    let addr = listener.local_addr()?;
    let state = Arc::new(state);
    let app = router(state.clone());
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let served = rt.block_on(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        });
        if let Err(e) = served {
            log::error!("service stopped: {e}");
        }
        // blocking HTTP clients inside the state must be dropped outside the runtime
        drop(rt);
        drop(state);
    });
    Ok(RunningServer { addr, shutdown: Some(tx), thread: Some(thread) })
}
