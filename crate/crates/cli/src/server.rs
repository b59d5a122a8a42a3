//! HTTP front end for a user-guided evolution session.
//!
//! Evaluation runs on a blocking thread against a copy of the session, so
//! reads stay responsive and report `evaluating` until the copy is swapped
//! back in.

use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use evobot_core::evolution::{Candidate, HistoryEntry, Session, SessionError, SessionStatus};
use evobot_core::world::{Bounds, Obstacle, Target};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    GenerationReady { generation: usize },
    EvaluationProgress { done: usize, total: usize },
    SessionPaused { generation: usize },
}

impl Event {
    fn line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("event serializes");
        s.push('\n');
        s
    }
}

struct Inner {
    session: Session,
    busy: bool,
    last_activity: Instant,
}

pub struct AppState {
    inner: Mutex<Inner>,
    events: broadcast::Sender<Event>,
    timeout: Duration,
    save_path: Option<PathBuf>,
}

impl AppState {
    pub fn new(session: Session, timeout: Duration, save_path: Option<PathBuf>) -> Arc<AppState> {
        let (events, _) = broadcast::channel(1024);
        Arc::new(AppState {
            inner: Mutex::new(Inner { session, busy: false, last_activity: Instant::now() }),
            events,
            timeout,
            save_path,
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Event> {
        self.events.subscribe()
    }

    /// Pause the session if it has waited longer than the timeout. Returns
    /// true when it paused now.
    pub fn check_timeout(&self) -> bool {
        let mut g = self.lock();
        if g.busy || g.session.status() != SessionStatus::AwaitingSelection || g.last_activity.elapsed() < self.timeout {
            return false;
        }
        let err = g.session.pause();
        log::info!("{err}");
        let _ = self.events.send(Event::SessionPaused { generation: g.session.generation() });
        true
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub generation: usize,
    pub pop_size: usize,
    pub mode: String,
    pub status: SessionStatus,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SelectionRequest {
    pub ids: Vec<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SelectionResponse {
    pub generation: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WorldInfo {
    pub bounds: Bounds,
    pub target: Target,
    pub obstacles: Vec<Obstacle>,
}

fn error(status: StatusCode, kind: &str, message: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": kind, "message": message.into() }))).into_response()
}

async fn get_session(State(st): State<Arc<AppState>>) -> Json<SessionInfo> {
    let g = st.lock();
    let s = &g.session;
    Json(SessionInfo {
        session_id: s.id.clone(),
        generation: s.generation(),
        pop_size: s.pop_size(),
        mode: "user_guided".into(),
        status: if g.busy { SessionStatus::Evaluating } else { s.status() },
    })
}

async fn get_generation(State(st): State<Arc<AppState>>) -> Json<Vec<Candidate>> {
    Json(st.lock().session.candidates().to_vec())
}

async fn get_history(State(st): State<Arc<AppState>>) -> Json<Vec<HistoryEntry>> {
    Json(st.lock().session.history().to_vec())
}

async fn get_world(State(st): State<Arc<AppState>>) -> Json<WorldInfo> {
    let g = st.lock();
    let w = &g.session.task().world;
    Json(WorldInfo { bounds: w.bounds, target: w.target, obstacles: w.obstacles.clone() })
}

async fn post_selection(State(st): State<Arc<AppState>>, Json(req): Json<SelectionRequest>) -> Response {
    let mut session = {
        let mut g = st.lock();
        if g.busy {
            return error(StatusCode::CONFLICT, "Busy", "a generation is being evaluated");
        }
        if req.ids.is_empty() {
            return error(StatusCode::BAD_REQUEST, "InvalidSelection", "select at least one id");
        }
        if let Some(id) = req.ids.iter().find(|id| g.session.genome(**id).is_none()) {
            return error(StatusCode::BAD_REQUEST, "InvalidSelection", format!("unknown id {id}"));
        }
        g.busy = true;
        g.last_activity = Instant::now();
        g.session.clone()
    };
    let tx = st.events.clone();
    let ids = req.ids;
    let joined = tokio::task::spawn_blocking(move || {
        let r = session.select_with_progress(&ids, &|done, total| {
            let _ = tx.send(Event::EvaluationProgress { done, total });
        });
        (session, r)
    })
    .await;
    let mut g = st.lock();
    g.busy = false;
    g.last_activity = Instant::now();
    match joined {
        Ok((session, Ok(generation))) => {
            g.session = session;
            if let Some(p) = &st.save_path {
                if let Err(e) = g.session.save(p) {
                    log::warn!("could not save session: {e}");
                }
            }
            let _ = st.events.send(Event::GenerationReady { generation });
            Json(SelectionResponse { generation }).into_response()
        }
        Ok((_, Err(SessionError::InvalidSelection(m)))) => error(StatusCode::BAD_REQUEST, "InvalidSelection", m),
        Ok((_, Err(e))) => error(StatusCode::INTERNAL_SERVER_ERROR, "Runtime", e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "Runtime", e.to_string()),
    }
}

/// Newline-delimited events. A connecting client first receives the
/// current state, so it can resync after a reconnect.
async fn get_stream(State(st): State<Arc<AppState>>) -> Response {
    let rx = st.subscribe();
    let first = {
        let g = st.lock();
        let generation = g.session.generation();
        match g.session.status() {
            SessionStatus::Paused => Some(Event::SessionPaused { generation }),
            _ if g.busy => None,
            _ => Some(Event::GenerationReady { generation }),
        }
    };
    let stream = futures::stream::unfold((first, rx), |(first, mut rx)| async move {
        if let Some(e) = first {
            return Some((Ok::<_, Infallible>(e.line()), (None, rx)));
        }
        loop {
            match rx.recv().await {
                Ok(e) => return Some((Ok(e.line()), (None, rx))),
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    ([(header::CONTENT_TYPE, "application/x-ndjson")], Body::from_stream(stream)).into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/session", get(get_session))
        .route("/api/generation", get(get_generation))
        .route("/api/selection", post(post_selection))
        .route("/api/stream", get(get_stream))
        .route("/api/history", get(get_history))
        .route("/api/world", get(get_world))
        .with_state(state)
}

/// Serve until the process is stopped, pausing idle sessions.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    let watch = state.clone();
    let tick = (state.timeout / 4).clamp(Duration::from_millis(10), Duration::from_secs(1));
    tokio::spawn(async move {
        let mut iv = tokio::time::interval(tick);
        loop {
            iv.tick().await;
            watch.check_timeout();
        }
    });
    axum::serve(listener, router(state)).await
}
