//! HTTP server exposing any [`VisTool`].

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use ava_core::tool::{ToolError, VisTool};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::sync::oneshot;

use crate::wire::{ErrorBody, RenderRequest, RenderResponse};

#[derive(Debug, thiserror::Error)]
pub enum BindError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("cannot start server runtime: {0}")]
    Runtime(std::io::Error),
}

type SharedTool = Arc<dyn VisTool>;

fn error_response(e: &ToolError) -> Response {
    let status = StatusCode::from_u16(ErrorBody::status_of(e)).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, Json(ErrorBody::from_tool_error(e))).into_response()
}

async fn describe(State(tool): State<SharedTool>) -> Response {
    match tokio::task::spawn_blocking(move || tool.describe()).await {
        Ok(Ok(d)) => Json(d).into_response(),
        Ok(Err(e)) => error_response(&e),
        Err(e) => error_response(&ToolError::Render(e.to_string())),
    }
}

async fn render(State(tool): State<SharedTool>, body: Bytes) -> Response {
    let req: RenderRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => {
            let body = ErrorBody::new("malformed_request", format!("expected {{\"params\": {{..}}}}: {e}"));
            return (StatusCode::BAD_REQUEST, Json(body)).into_response();
        }
    };
    match tokio::task::spawn_blocking(move || tool.render(&req.params)).await {
        Ok(Ok(out)) => Json(RenderResponse::encode(&out)).into_response(),
        Ok(Err(e)) => error_response(&e),
        Err(e) => error_response(&ToolError::Render(e.to_string())),
    }
}

/// Routes `GET /describe` and `POST /render` for `tool`.
pub fn router(tool: Arc<dyn VisTool>) -> Router {
    Router::new()
        .route("/describe", get(describe))
        .route("/render", post(render))
        .with_state(tool)
}

/// A server running on its own thread. Dropping it shuts the server down.
pub struct ToolServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ToolServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ToolServer {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}

/// Binds `addr` (port 0 picks a free port) and serves `tool` until the
/// returned handle is dropped.
pub fn serve_tool(tool: Arc<dyn VisTool>, addr: &str) -> Result<ToolServer, BindError> {
    let listener = std::net::TcpListener::bind(addr).map_err(|source| BindError::Bind {
        addr: addr.to_string(),
        source,
    })?;
    let local = listener.local_addr().map_err(BindError::Runtime)?;
    listener.set_nonblocking(true).map_err(BindError::Runtime)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .map_err(BindError::Runtime)?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(tool);
    let thread = std::thread::Builder::new()
        .name(format!("tool-server-{}", local.port()))
        .spawn(move || {
            runtime.block_on(async move {
                let listener = match tokio::net::TcpListener::from_std(listener) {
                    Ok(l) => l,
                    Err(e) => {
                        tracing::error!("tool server: {e}");
                        return;
                    }
                };
                let shutdown = async {
                    let _ = rx.await;
                };
                if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
                    tracing::error!("tool server: {e}");
                }
            });
        })
        .map_err(BindError::Runtime)?;
    tracing::info!(%local, "tool server listening");
    Ok(ToolServer {
        addr: local,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
