//! Session collection service.
//!
//! `GET /api/trials` hands out trial structures without rewards,
//! `GET /api/reveal/{trial}/{node}` returns one hidden value per click, and
//! `POST /api/sessions` validates an upload and appends it to a JSONL file.
//! Anything else is served from the optional static directory.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use tokio::sync::Mutex;
use tower_http::services::ServeDir;

use mcrl_core::env::TrialSpec;

use crate::session::{Rejection, SessionUpload, TrialSet, UPLOAD_SCHEMA};

pub struct AppState {
    pub set: TrialSet,
    pub sessions: PathBuf,
    append: Mutex<()>,
}

impl AppState {
    pub fn new(set: TrialSet, sessions: PathBuf) -> Self {
        AppState { set, sessions, append: Mutex::new(()) }
    }
}

#[derive(Serialize)]
struct ServedTrial<'a> {
    index: usize,
    spec: &'a TrialSpec,
}

#[derive(Serialize)]
struct TrialsBody<'a> {
    condition: &'a str,
    trials: Vec<ServedTrial<'a>>,
}

#[derive(Serialize)]
struct RevealBody {
    trial: usize,
    node: usize,
    value: f64,
}

#[derive(Serialize)]
struct Accepted {
    status: &'static str,
    participant: String,
    trials: usize,
}

fn reject(status: StatusCode, r: Rejection) -> Response {
    (status, Json(r)).into_response()
}

async fn trials(State(st): State<Arc<AppState>>) -> Response {
    let body = TrialsBody {
        condition: &st.set.condition,
        trials: st.set.trials.iter().enumerate().map(|(index, f)| ServedTrial { index, spec: &f.spec }).collect(),
    };
    Json(body).into_response()
}

async fn reveal(State(st): State<Arc<AppState>>, UrlPath((trial, node)): UrlPath<(usize, usize)>) -> Response {
    let Some(file) = st.set.trials.get(trial) else {
        return reject(StatusCode::NOT_FOUND, Rejection::new("not-found", format!("no trial {trial}")));
    };
    if node == 0 || node >= file.spec.n_nodes() {
        return reject(StatusCode::NOT_FOUND, Rejection::new("not-found", format!("trial {trial} has no clickable node {node}")));
    }
    Json(RevealBody { trial, node, value: file.truth.value(node) }).into_response()
}

async fn schema() -> Response {
    ([(header::CONTENT_TYPE, "application/schema+json")], UPLOAD_SCHEMA).into_response()
}

/// Append one line, rolling the file back to its old length if the write
/// fails part way.
fn append_line(path: &Path, line: &str) -> std::io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let before = f.metadata()?.len();
    if let Err(e) = f.write_all(line.as_bytes()).and_then(|_| f.sync_data()) {
        let _ = f.set_len(before);
        return Err(e);
    }
    Ok(())
}

async fn upload(State(st): State<Arc<AppState>>, body: Bytes) -> Response {
    let upload: SessionUpload = match serde_json::from_slice(&body) {
        Ok(u) => u,
        Err(e) => return reject(StatusCode::BAD_REQUEST, Rejection::new("malformed-json", e.to_string())),
    };
    let record = match upload.into_record(&st.set) {
        Ok(r) => r,
        Err(r) => return reject(StatusCode::UNPROCESSABLE_ENTITY, r),
    };
    let line = record.to_json_line();
    let _guard = st.append.lock().await;
    if let Err(e) = append_line(&st.sessions, &line) {
        return reject(StatusCode::INTERNAL_SERVER_ERROR, Rejection::new("storage", e.to_string()));
    }
    let body = Accepted { status: "accepted", participant: record.participant, trials: record.trials.len() };
    (StatusCode::CREATED, Json(body)).into_response()
}

pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/trials", get(trials))
        .route("/api/reveal/{trial}/{node}", get(reveal))
        .route("/api/sessions", post(upload))
        .route("/api/schema", get(schema))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Bind and serve until Ctrl-C.
pub async fn run(addr: &str, state: Arc<AppState>, static_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!(
        "serving {} trials of {} on http://{}, sessions -> {}",
        state.set.trials.len(),
        state.set.condition,
        listener.local_addr()?,
        state.sessions.display()
    );
    let app = router(state, static_dir.as_deref());
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
