//! REST and server-sent events surface over an [`Engine`].
//!
//! Endpoints:
//!
//! | method | path                          | result                                  |
//! |--------|-------------------------------|-----------------------------------------|
//! | POST   | `/v1/sessions`                | 201 `{"id"}`                            |
//! | POST   | `/v1/sessions/{id}/messages`  | 202 `{"run_id"}`, body `{"text"}`       |
//! | GET    | `/v1/runs/{id}`               | the run as JSON                         |
//! | GET    | `/v1/runs/{id}/events`        | `text/event-stream` of run events       |
//! | GET    | `/v1/tools`                   | tool schemas in priority order          |
//!
//! Runs of one session execute one at a time in arrival order on a blocking
//! thread; runs of different sessions proceed in parallel.

use std::collections::HashMap;
use std::convert::Infallible;
use std::sync::{Arc, Mutex, MutexGuard};

use athena_core::engine::{EngineError, Run, RunEvent, RunStatus};
use athena_core::Engine;
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::{mpsc, watch};
use tower_http::cors::CorsLayer;

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

#[derive(Default)]
struct RunState {
    /// Latest snapshot, `None` until the worker picks the run up.
    run: Option<Run>,
    events: Vec<RunEvent>,
    /// Set when no further events will arrive.
    closed: bool,
    error: Option<String>,
}

/// One submitted run and its live event buffer.
struct RunHandle {
    id: String,
    session_id: String,
    state: Mutex<RunState>,
    changed: watch::Sender<()>,
}

impl RunHandle {
    fn new(id: String, session_id: String) -> Self {
        Self { id, session_id, state: Mutex::default(), changed: watch::channel(()).0 }
    }

    fn update(&self, f: impl FnOnce(&mut RunState)) {
        f(&mut lock(&self.state));
        self.changed.send_replace(());
    }

    fn to_json(&self) -> Value {
        let state = lock(&self.state);
        match &state.run {
            Some(run) => serde_json::to_value(run).unwrap_or(Value::Null),
            None => {
                let status = if state.closed { RunStatus::Failed } else { RunStatus::Queued };
                let mut v = json!({ "id": self.id, "session_id": self.session_id, "status": status, "events": [] });
                if let Some(e) = &state.error {
                    v["error"] = json!(e);
                }
                v
            }
        }
    }
}

struct Job {
    handle: Arc<RunHandle>,
    text: String,
}

struct Inner {
    engine: Arc<Engine>,
    runs: Mutex<HashMap<String, Arc<RunHandle>>>,
    workers: Mutex<HashMap<String, mpsc::UnboundedSender<Job>>>,
}

/// Shared gateway state; cheap to clone.
#[derive(Clone)]
pub struct Gateway {
    inner: Arc<Inner>,
}

impl Gateway {
    pub fn new(engine: Arc<Engine>) -> Self {
        Self { inner: Arc::new(Inner { engine, runs: Mutex::default(), workers: Mutex::default() }) }
    }

    pub fn engine(&self) -> &Engine {
        &self.inner.engine
    }

    pub fn router(self) -> Router {
        Router::new()
            .route("/v1/sessions", post(create_session))
            .route("/v1/sessions/{id}/messages", post(post_message))
            .route("/v1/runs/{id}", get(get_run))
            .route("/v1/runs/{id}/events", get(stream_events))
            .route("/v1/tools", get(list_tools))
            .layer(CorsLayer::permissive())
            .with_state(self)
    }

    fn run(&self, id: &str) -> Option<Arc<RunHandle>> {
        lock(&self.inner.runs).get(id).cloned()
    }

    /// Queues a run on the session's worker, starting the worker if needed.
    /// Must be called from within a tokio runtime.
    fn enqueue(&self, session_id: &str, text: String) -> Arc<RunHandle> {
        let handle = Arc::new(RunHandle::new(uuid::Uuid::new_v4().to_string(), session_id.to_string()));
        lock(&self.inner.runs).insert(handle.id.clone(), handle.clone());
        let mut workers = lock(&self.inner.workers);
        let tx = workers.entry(session_id.to_string()).or_insert_with(|| {
            let (tx, rx) = mpsc::unbounded_channel();
            tokio::spawn(session_worker(self.inner.engine.clone(), rx));
            tx
        });
        if let Err(mpsc::error::SendError(job)) = tx.send(Job { handle: handle.clone(), text }) {
            job.handle.update(|s| {
                s.closed = true;
                s.error = Some("session worker stopped".into());
            });
        }
        handle
    }
}

async fn session_worker(engine: Arc<Engine>, mut rx: mpsc::UnboundedReceiver<Job>) {
    while let Some(Job { handle, text }) = rx.recv().await {
        let engine = engine.clone();
        let h = handle.clone();
        let outcome = tokio::task::spawn_blocking(move || execute(&engine, &h, &text)).await;
        let error = match outcome {
            Ok(Ok(())) => None,
            Ok(Err(e)) => Some(e.to_string()),
            Err(e) => Some(format!("run panicked: {e}")),
        };
        if let Some(e) = &error {
            log::warn!("run {} ended abnormally: {e}", handle.id);
        }
        handle.update(|s| {
            s.closed = true;
            s.error = error;
        });
    }
}

fn execute(engine: &Engine, handle: &RunHandle, text: &str) -> Result<(), EngineError> {
    let mut run = engine.submit_message_as(&handle.id, &handle.session_id, text)?;
    let observer = |run: &Run, event: &RunEvent| {
        handle.update(|s| {
            s.events.push(event.clone());
            s.run = Some(run.clone());
        })
    };
    let result = engine.execute_run_observed(&mut run, &observer);
    handle.update(|s| s.run = Some(run));
    result
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

async fn create_session(State(gw): State<Gateway>) -> Response {
    let engine = gw.inner.engine.clone();
    match tokio::task::spawn_blocking(move || engine.create_session()).await {
        Ok(Ok(session)) => (StatusCode::CREATED, Json(json!({ "id": session.id }))).into_response(),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("StoreError: {e}")),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

#[derive(Deserialize)]
struct MessageBody {
    text: String,
}

async fn post_message(State(gw): State<Gateway>, Path(session_id): Path<String>, body: Bytes) -> Response {
    let text = match serde_json::from_slice::<MessageBody>(&body) {
        Ok(b) if !b.text.trim().is_empty() => b.text,
        Ok(_) => return error(StatusCode::BAD_REQUEST, "text must be nonempty"),
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("expected {{\"text\": ...}}: {e}")),
    };
    if !gw.engine().sessions().contains(&session_id) {
        return error(StatusCode::NOT_FOUND, format!("unknown session {session_id}"));
    }
    let handle = gw.enqueue(&session_id, text);
    (StatusCode::ACCEPTED, Json(json!({ "run_id": handle.id }))).into_response()
}

async fn get_run(State(gw): State<Gateway>, Path(run_id): Path<String>) -> Response {
    match gw.run(&run_id) {
        Some(handle) => Json(handle.to_json()).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown run {run_id}")),
    }
}

async fn list_tools(State(gw): State<Gateway>) -> Response {
    Json(gw.engine().registry().list_schemas()).into_response()
}

fn sse_event(e: &RunEvent) -> Event {
    Event::default().event(e.kind()).id(e.sequence_no.to_string()).data(e.body.payload_json().to_string())
}

/// Index of the first event to send, from a `Last-Event-ID` header.
fn resume_from(headers: &HeaderMap) -> usize {
    headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<usize>().ok())
        .map_or(0, |last| last + 1)
}

fn event_stream(handle: Arc<RunHandle>, start: usize) -> impl Stream<Item = Result<Event, Infallible>> {
    let rx = handle.changed.subscribe();
    stream::unfold((handle, rx, start, false), |(handle, mut rx, next, done)| async move {
        if done {
            return None;
        }
        loop {
            rx.borrow_and_update();
            let (event, closed) = {
                let state = lock(&handle.state);
                (state.events.get(next).cloned(), state.closed)
            };
            if let Some(event) = event {
                let terminal = event.is_terminal();
                return Some((Ok(sse_event(&event)), (handle, rx, next + 1, terminal)));
            }
            if closed || rx.changed().await.is_err() {
                return None;
            }
        }
    })
}

async fn stream_events(State(gw): State<Gateway>, Path(run_id): Path<String>, headers: HeaderMap) -> Response {
    match gw.run(&run_id) {
        Some(handle) => Sse::new(event_stream(handle, resume_from(&headers)))
            .keep_alive(KeepAlive::default())
            .into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown run {run_id}")),
    }
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, engine: Arc<Engine>) -> std::io::Result<()> {
    axum::serve(listener, Gateway::new(engine).router()).await
}
