//! HTTP routes over a [`Registry`].

use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::{Component, Path as FsPath, PathBuf};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use ava_core::image::ImageRef;
use ava_proto::ErrorBody;
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::de::DeserializeOwned;
use tokio::sync::oneshot;

use crate::registry::{ApiError, ControlCommand, CreateSession, Registry, SessionEvent};

#[derive(Clone)]
struct App {
    registry: Arc<Registry>,
    static_dir: Option<Arc<PathBuf>>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(ErrorBody::new(self.code, self.message))).into_response()
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(422, "invalid_request", e.to_string()))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(500, "internal", e.to_string()))?
}

async fn create(State(app): State<App>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateSession = parse(&body)?;
    let registry = app.registry.clone();
    let id = blocking(move || registry.create(req)).await?;
    let status = app.registry.session(&id)?.status;
    Ok((StatusCode::CREATED, Json(serde_json::json!({"id": id, "status": status}))).into_response())
}

async fn list(State(app): State<App>) -> Response {
    Json(app.registry.list()).into_response()
}

async fn session(State(app): State<App>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(app.registry.session(&id)?).into_response())
}

async fn control(State(app): State<App>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let command: ControlCommand = parse(&body)?;
    let registry = app.registry.clone();
    let status = blocking(move || registry.control(&id, command)).await?;
    Ok(Json(serde_json::json!({"status": status})).into_response())
}

fn sse_event(e: &SessionEvent) -> Event {
    Event::default()
        .event(e.name())
        .id(e.seq.to_string())
        .data(serde_json::to_string(e).expect("events always serialize"))
}

/// Replays the log from the start, then follows it live. Ends after the
/// terminal status event.
async fn events(
    State(app): State<App>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let handle = app.registry.handle(&id)?;
    let rx = handle.subscribe();
    let stream = futures::stream::unfold(
        (handle, rx, 0usize, Vec::<SessionEvent>::new().into_iter(), false),
        |(handle, mut rx, mut cursor, mut pending, mut done)| async move {
            loop {
                if let Some(e) = pending.next() {
                    return Some((Ok(sse_event(&e)), (handle, rx, cursor, pending, done)));
                }
                if done {
                    return None;
                }
                // Mark the current value seen before reading so no wakeup
                // between the read and the await is lost.
                rx.borrow_and_update();
                let (batch, finished) = handle.events_from(cursor);
                cursor += batch.len();
                if batch.is_empty() {
                    if finished {
                        return None;
                    }
                    if rx.changed().await.is_err() {
                        done = true;
                    }
                    continue;
                }
                done = batch.last().is_some_and(SessionEvent::is_terminal);
                pending = batch.into_iter();
            }
        },
    );
    Ok(Sse::new(stream).keep_alive(KeepAlive::new().interval(Duration::from_secs(15))))
}

async fn image(State(app): State<App>, Path(name): Path<String>) -> Result<Response, ApiError> {
    let hash = name.strip_suffix(".png").unwrap_or(&name).to_string();
    if !ImageRef::is_well_formed(&hash) {
        return Err(ApiError::new(400, "bad_id", format!("`{name}` is not an image hash")));
    }
    match app.registry.image(&ImageRef(hash))? {
        Some(png) => Ok(([(header::CONTENT_TYPE, "image/png")], png.0).into_response()),
        None => Err(ApiError::new(404, "unknown_image", format!("no image `{name}`"))),
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
        _ => "application/octet-stream",
    }
}

/// Serves files under the static directory; `/` maps to `index.html`.
async fn static_files(State(app): State<App>, uri: Uri) -> Response {
    let not_found = || ApiError::new(404, "not_found", format!("no route for {}", uri.path())).into_response();
    let Some(root) = app.static_dir else {
        return not_found();
    };
    let rel = uri.path().trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let rel = FsPath::new(rel);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return not_found();
    }
    let path = root.join(rel);
    match tokio::task::spawn_blocking({
        let path = path.clone();
        move || std::fs::read(path)
    })
    .await
    .ok()
    .and_then(Result::ok)
    {
        Some(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        None => not_found(),
    }
}

/// All service routes. With `static_dir` set, other GET paths serve files
/// from it.
pub fn router(registry: Arc<Registry>, static_dir: Option<PathBuf>) -> Router {
    Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}", get(session))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/control", post(control))
        .route("/images/{hash}", get(image))
        .fallback(static_files)
        .with_state(App {
            registry,
            static_dir: static_dir.map(Arc::new),
        })
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("cannot start server runtime: {0}")]
    Runtime(std::io::Error),
}

/// A running service. Dropping it stops accepting connections; session
/// workers keep their state in the registry.
pub struct ServiceServer {
    addr: SocketAddr,
    registry: Arc<Registry>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServiceServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
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

impl Drop for ServiceServer {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}

pub fn serve(registry: Arc<Registry>, addr: &str, static_dir: Option<PathBuf>) -> Result<ServiceServer, ServeError> {
    let listener = std::net::TcpListener::bind(addr).map_err(|source| ServeError::Bind {
        addr: addr.to_string(),
        source,
    })?;
    let local = listener.local_addr().map_err(ServeError::Runtime)?;
    listener.set_nonblocking(true).map_err(ServeError::Runtime)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()
        .map_err(ServeError::Runtime)?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(registry.clone(), static_dir);
    let thread = std::thread::Builder::new()
        .name(format!("service-{}", local.port()))
        .spawn(move || {
            runtime.block_on(async move {
                let listener = match tokio::net::TcpListener::from_std(listener) {
                    Ok(l) => l,
                    Err(e) => {
                        tracing::error!("service: {e}");
                        return;
                    }
                };
                // Event streams of live sessions never end on their own, so
                // shutdown drops connections instead of draining them.
                tokio::select! {
                    r = axum::serve(listener, app) => {
                        if let Err(e) = r {
                            tracing::error!("service: {e}");
                        }
                    }
                    _ = rx => {}
                }
            });
            runtime.shutdown_timeout(Duration::from_millis(200));
        })
        .map_err(ServeError::Runtime)?;
    tracing::info!(%local, "session service listening");
    Ok(ServiceServer {
        addr: local,
        registry,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
