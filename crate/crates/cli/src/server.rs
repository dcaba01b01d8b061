use std::collections::HashSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::fs::OpenOptions;
use tokio::io::AsyncWriteExt;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot};
use tower_http::services::ServeDir;

use driverchain::ingest::{decode_trace, FieldError, TRACE_SCHEMA};
use driverchain::types::ScenarioConfig;

pub const SESSIONS_FILE: &str = "sessions.jsonl";

const PLACEHOLDER: &str = "<!doctype html>\n<title>driverchain</title>\n<p>Session collection is running. \
Start the UI bundle with <code>--static</code> to serve it here.</p>\n";

enum StoreError {
    Duplicate,
    Io(String),
}

struct WriteRequest {
    id: String,
    line: String,
    ack: oneshot::Sender<Result<(), StoreError>>,
}

/// Append-only `sessions.jsonl`. One task owns the file and writes whole lines.
#[derive(Clone)]
pub struct SessionStore {
    tx: mpsc::Sender<WriteRequest>,
}

impl SessionStore {
    pub async fn open(dir: &Path) -> Result<Self> {
        tokio::fs::create_dir_all(dir)
            .await
            .with_context(|| format!("creating session directory {}", dir.display()))?;
        let path = dir.join(SESSIONS_FILE);
        let mut ids = HashSet::new();
        if let Ok(text) = tokio::fs::read_to_string(&path).await {
            for line in text.lines() {
                if let Some(id) = serde_json::from_str::<Value>(line)
                    .ok()
                    .and_then(|v| v["profile"]["id"].as_str().map(str::to_string))
                {
                    ids.insert(id);
                }
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .await
            .with_context(|| format!("opening {} for append", path.display()))?;

        let (tx, mut rx) = mpsc::channel::<WriteRequest>(256);
        tokio::spawn(async move {
            while let Some(req) = rx.recv().await {
                let result = if ids.contains(&req.id) {
                    Err(StoreError::Duplicate)
                } else {
                    let mut buf = req.line.into_bytes();
                    buf.push(b'\n');
                    match async {
                        file.write_all(&buf).await?;
                        file.flush().await
                    }
                    .await
                    {
                        Ok(()) => {
                            ids.insert(req.id);
                            Ok(())
                        }
                        Err(e) => Err(StoreError::Io(e.to_string())),
                    }
                };
                let _ = req.ack.send(result);
            }
        });
        Ok(SessionStore { tx })
    }

    async fn append(&self, id: String, line: String) -> Result<(), StoreError> {
        let (ack, done) = oneshot::channel();
        self.tx
            .send(WriteRequest { id, line, ack })
            .await
            .map_err(|_| StoreError::Io("writer stopped".into()))?;
        done.await.map_err(|_| StoreError::Io("writer stopped".into()))?
    }
}

#[derive(Clone)]
struct AppState {
    config: Arc<ScenarioConfig>,
    store: SessionStore,
}

fn unprocessable(errors: Vec<FieldError>) -> Response {
    (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({ "errors": errors }))).into_response()
}

async fn get_config(State(app): State<AppState>) -> Json<ScenarioConfig> {
    Json((*app.config).clone())
}

async fn get_schema() -> Response {
    ([(header::CONTENT_TYPE, "application/schema+json")], TRACE_SCHEMA).into_response()
}

async fn post_session(State(app): State<AppState>, body: Bytes) -> Response {
    let mut value: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => {
            return unprocessable(vec![FieldError {
                field: "$".into(),
                message: e.to_string(),
            }])
        }
    };
    if let Some(profile) = value.get_mut("profile").and_then(Value::as_object_mut) {
        let needs_id = match profile.get("id") {
            None | Some(Value::Null) => true,
            Some(Value::String(s)) => s.trim().is_empty(),
            Some(_) => false,
        };
        if needs_id {
            profile.insert("id".into(), Value::String(uuid::Uuid::new_v4().to_string()));
        }
    }
    let trace = match decode_trace(&value.to_string(), &app.config) {
        Ok(t) => t,
        Err(errors) => return unprocessable(errors),
    };
    let id = trace.profile.id.clone();
    let line = serde_json::to_string(&trace).expect("trace serializes");
    match app.store.append(id.clone(), line).await {
        Ok(()) => (StatusCode::CREATED, Json(json!({ "id": id }))).into_response(),
        Err(StoreError::Duplicate) => (
            StatusCode::CONFLICT,
            Json(json!({ "errors": [{ "field": "profile.id", "message": format!("session {id:?} already stored") }] })),
        )
            .into_response(),
        Err(StoreError::Io(message)) => {
            (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": message }))).into_response()
        }
    }
}

async fn placeholder() -> Html<&'static str> {
    Html(PLACEHOLDER)
}

pub fn router(config: ScenarioConfig, store: SessionStore, static_dir: Option<PathBuf>) -> Router {
    let state = AppState {
        config: Arc::new(config),
        store,
    };
    let api = Router::new()
        .route("/api/config", get(get_config))
        .route("/api/schema", get(get_schema))
        .route("/api/sessions", post(post_session))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(placeholder)),
    }
}

/// A bound listener with its routes, ready to serve.
pub struct Server {
    listener: TcpListener,
    app: Router,
}

impl Server {
    pub async fn bind(config: ScenarioConfig, dir: &Path, addr: SocketAddr, static_dir: Option<PathBuf>) -> Result<Self> {
        if let Some(d) = &static_dir {
            if !d.is_dir() {
                bail!("static directory {} does not exist", d.display());
            }
        }
        let store = SessionStore::open(dir).await?;
        let listener = TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        Ok(Server {
            listener,
            app: router(config, store, static_dir),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    pub async fn serve(self) -> Result<()> {
        axum::serve(self.listener, self.app).await?;
        Ok(())
    }
}

pub async fn run(config: ScenarioConfig, dir: &Path, addr: SocketAddr, static_dir: Option<PathBuf>) -> Result<()> {
    let server = Server::bind(config, dir, addr, static_dir).await?;
    eprintln!(
        "listening on http://{}, sessions in {}",
        server.local_addr()?,
        dir.join(SESSIONS_FILE).display()
    );
    server.serve().await
}
