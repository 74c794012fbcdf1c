//! Feedback service for a human oracle.
//!
//! The learner publishes one query at a time into a [`Broker`] and blocks
//! until a verdict for that query id arrives over HTTP.

use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gem_core::refine::{Oracle, RefineState};
use gem_core::relations::Feedback;
use gem_core::scene::{Edge, Scene};
use gem_core::GemError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryStatus {
    Pending,
    Answered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEnvelope {
    pub query_id: u64,
    pub iteration: usize,
    pub scene: Scene,
    pub status: QueryStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRequest {
    pub query_id: u64,
    pub accept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusView {
    pub iteration: usize,
    pub queries_answered: usize,
    pub accepted: usize,
    pub graph: String,
    pub edges: Vec<Edge>,
    pub pending: Option<u64>,
    pub finished: bool,
    /// Final state of the demonstration, shown next to queries for reference.
    pub reference: Option<Scene>,
}

/// Why a verdict was refused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeedbackError {
    /// The query already has a verdict.
    Duplicate(u64),
    /// No such query, or it was withdrawn.
    NotPending(u64),
}

#[derive(Debug)]
struct Slot {
    next_id: u64,
    pending: Option<QueryEnvelope>,
    verdict: Option<(u64, bool)>,
    /// Ids that received a verdict.
    answered: Vec<u64>,
    status: StatusView,
}

/// Single-slot handoff between the learner and the HTTP handlers.
#[derive(Debug)]
pub struct Broker {
    slot: Mutex<Slot>,
    cv: Condvar,
}

impl Broker {
    pub fn new(reference: Option<Scene>) -> Self {
        Self {
            slot: Mutex::new(Slot {
                next_id: 1,
                pending: None,
                verdict: None,
                answered: Vec::new(),
                status: StatusView {
                    iteration: 0,
                    queries_answered: 0,
                    accepted: 0,
                    graph: String::new(),
                    edges: Vec::new(),
                    pending: None,
                    finished: false,
                    reference,
                },
            }),
            cv: Condvar::new(),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Slot> {
        self.slot.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Publishes a query and returns its id. Any unanswered query is withdrawn.
    pub fn publish(&self, iteration: usize, scene: Scene) -> u64 {
        let mut s = self.lock();
        let id = s.next_id;
        s.next_id += 1;
        s.pending = Some(QueryEnvelope {
            query_id: id,
            iteration,
            scene,
            status: QueryStatus::Pending,
        });
        s.verdict = None;
        s.status.pending = Some(id);
        id
    }

    pub fn pending(&self) -> Option<QueryEnvelope> {
        self.lock().pending.clone()
    }

    /// Records a verdict for the pending query.
    pub fn answer(&self, query_id: u64, accept: bool) -> Result<(), FeedbackError> {
        let mut s = self.lock();
        if s.answered.contains(&query_id) {
            return Err(FeedbackError::Duplicate(query_id));
        }
        match &s.pending {
            Some(p) if p.query_id == query_id => {}
            _ => return Err(FeedbackError::NotPending(query_id)),
        }
        s.pending = None;
        s.verdict = Some((query_id, accept));
        s.answered.push(query_id);
        s.status.pending = None;
        s.status.queries_answered += 1;
        if accept {
            s.status.accepted += 1;
        }
        self.cv.notify_all();
        Ok(())
    }

    /// Blocks until `query_id` is answered or `timeout` passes.
    pub fn wait(&self, query_id: u64, timeout: Option<Duration>) -> Option<bool> {
        let deadline = timeout.map(|t| Instant::now() + t);
        let mut s = self.lock();
        loop {
            if let Some((id, v)) = s.verdict {
                if id == query_id {
                    return Some(v);
                }
            }
            match deadline {
                None => s = self.cv.wait(s).unwrap_or_else(|e| e.into_inner()),
                Some(d) => {
                    let now = Instant::now();
                    if now >= d {
                        // Withdraw so a late verdict cannot be applied to a later query.
                        if s.pending.as_ref().is_some_and(|p| p.query_id == query_id) {
                            s.pending = None;
                            s.status.pending = None;
                        }
                        return None;
                    }
                    s = self.cv.wait_timeout(s, d - now).unwrap_or_else(|e| e.into_inner()).0;
                }
            }
        }
    }

    pub fn update_status(&self, state: &RefineState, finished: bool) {
        let mut s = self.lock();
        s.status.iteration = state.iteration;
        s.status.graph = state.current.graph.to_string();
        s.status.edges = state.current.graph.edges().collect();
        s.status.finished = finished;
    }

    pub fn status(&self) -> StatusView {
        self.lock().status.clone()
    }
}

/// Oracle backed by the broker.
pub struct HumanOracle {
    pub broker: Arc<Broker>,
    pub timeout: Option<Duration>,
}

impl Oracle for HumanOracle {
    fn feedback(&mut self, iteration: usize, query: &Scene) -> gem_core::Result<Feedback> {
        let id = self.broker.publish(iteration, query.clone());
        log::info!("query {id} (iteration {iteration}) waiting for a verdict");
        match self.broker.wait(id, self.timeout) {
            Some(accept) => Ok(Feedback { accept }),
            None => Err(GemError::OracleUnavailable(format!("no verdict for query {id}"))),
        }
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

fn error(code: StatusCode, msg: String) -> Response {
    (code, Json(ErrorBody { error: msg })).into_response()
}

async fn get_query(State(b): State<Arc<Broker>>) -> Response {
    match b.pending() {
        Some(env) => Json(env).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn post_feedback(State(b): State<Arc<Broker>>, Json(req): Json<FeedbackRequest>) -> Response {
    match b.answer(req.query_id, req.accept) {
        Ok(()) => Json(serde_json::json!({"ok": true, "query_id": req.query_id})).into_response(),
        Err(FeedbackError::Duplicate(id)) => error(StatusCode::CONFLICT, format!("query {id} already answered")),
        Err(FeedbackError::NotPending(id)) => error(StatusCode::NOT_FOUND, format!("query {id} is not pending")),
    }
}

async fn get_status(State(b): State<Arc<Broker>>) -> Json<StatusView> {
    Json(b.status())
}

pub fn router(broker: Arc<Broker>) -> Router {
    Router::new()
        .route("/api/query", get(get_query))
        .route("/api/feedback", post(post_feedback))
        .route("/api/status", get(get_status))
        .with_state(broker)
}

/// Running HTTP service; dropping it shuts the server down.
pub struct Service {
    pub addr: std::net::SocketAddr,
    runtime: Option<tokio::runtime::Runtime>,
}

impl Service {
    /// Binds `127.0.0.1:port` (0 picks a free port) and serves in background threads.
    pub fn start(broker: Arc<Broker>, port: u16) -> anyhow::Result<Self> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_io()
            .build()?;
        let listener = runtime.block_on(tokio::net::TcpListener::bind(("127.0.0.1", port)))?;
        let addr = listener.local_addr()?;
        let app = router(broker);
        runtime.spawn(async move {
            if let Err(e) = axum::serve(listener, app).await {
                log::error!("feedback service stopped: {e}");
            }
        });
        log::info!("feedback service listening on http://{addr}");
        Ok(Self {
            addr,
            runtime: Some(runtime),
        })
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        if let Some(rt) = self.runtime.take() {
            rt.shutdown_background();
        }
    }
}
