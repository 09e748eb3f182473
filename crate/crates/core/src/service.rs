//! Request handling, telemetry sink and the HTTP front end.
//!
//! Endpoints (JSON bodies):
//!
//! * `POST /v1/suggest`: [`SuggestRequest`] to [`SuggestResponse`]
//! * `POST /v1/telemetry`: [`SuggestionEvent`] to `{"ack": true}`
//! * `GET /v1/healthz`: status plus engine counters
//!
//! Errors come back as `{"error": <code>, "message": <text>}` with status
//! 400 (`bad_request`), 404 (`unknown_request`), 409 (`conflict`) or 503
//! (`backend_unavailable`).

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    BackendError, CounterSnapshot, EngineConfig, EngineError, ModelBackend, PasteInput, RemoteBackend, ScriptedBackend,
    SuggestionEngine,
};
use crate::metrics::{EventKind, SuggestionEvent};
use crate::miner::PasteRegion;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestRequest {
    pub file_path: String,
    pub language: String,
    pub content_after_paste: String,
    pub region: PasteRegion,
    pub request_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionBody {
    pub patch_text: String,
    pub preview_region_lines: Vec<String>,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestResponse {
    pub suggestion: Option<SuggestionBody>,
    pub engine_latency_ms: f64,
    pub model_latency_ms: f64,
    pub request_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServiceError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("unknown request id {0:?}")]
    UnknownRequest(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("telemetry log: {0}")]
    Io(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::BackendUnavailable(_) => "backend_unavailable",
            ServiceError::UnknownRequest(_) => "unknown_request",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::Io(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::BackendUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::UnknownRequest(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.code(), "message": self.to_string() });
        (self.status(), Json(body)).into_response()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RequestState {
    Issued,
    Shown,
    Closed,
}

/// Append-only newline-delimited log of [`SuggestionEvent`]s. Writes are
/// serialized, so events for one request keep their submission order.
pub struct TelemetrySink {
    inner: Mutex<SinkInner>,
}

struct SinkInner {
    writer: Option<BufWriter<File>>,
    events: Vec<SuggestionEvent>,
    requests: HashMap<String, RequestState>,
}

impl TelemetrySink {
    /// Keeps events in memory only.
    pub fn in_memory() -> Self {
        TelemetrySink {
            inner: Mutex::new(SinkInner {
                writer: None,
                events: Vec::new(),
                requests: HashMap::new(),
            }),
        }
    }

    /// Appends to `path`, creating it if needed. Events are also kept in memory.
    pub fn append_to(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let sink = Self::in_memory();
        sink.inner.lock().expect("sink lock").writer = Some(BufWriter::new(file));
        Ok(sink)
    }

    fn register(&self, request_id: &str) {
        let mut inner = self.inner.lock().expect("sink lock");
        inner
            .requests
            .entry(request_id.to_owned())
            .or_insert(RequestState::Issued);
    }

    pub fn record(&self, event: SuggestionEvent) -> Result<(), ServiceError> {
        if !event.is_well_formed() {
            return Err(ServiceError::BadRequest(
                "after_text must be present exactly for Accepted events".into(),
            ));
        }
        let mut inner = self.inner.lock().expect("sink lock");
        let state = inner.requests.get(&event.request_id).copied();
        let next = match (event.kind, state) {
            (EventKind::Shown, None | Some(RequestState::Issued)) => RequestState::Shown,
            (EventKind::Shown, Some(_)) => {
                return Err(ServiceError::Conflict(format!(
                    "request {:?} was already shown",
                    event.request_id
                )))
            }
            (_, Some(RequestState::Shown)) => RequestState::Closed,
            (_, Some(RequestState::Closed)) => {
                return Err(ServiceError::Conflict(format!(
                    "request {:?} is already closed",
                    event.request_id
                )))
            }
            (_, None | Some(RequestState::Issued)) => return Err(ServiceError::UnknownRequest(event.request_id)),
        };
        if let Some(w) = inner.writer.as_mut() {
            let line = serde_json::to_string(&event).map_err(|e| ServiceError::Io(e.to_string()))?;
            writeln!(w, "{line}").map_err(|e| ServiceError::Io(e.to_string()))?;
        }
        inner.requests.insert(event.request_id.clone(), next);
        inner.events.push(event);
        Ok(())
    }

    pub fn flush(&self) -> std::io::Result<()> {
        match self.inner.lock().expect("sink lock").writer.as_mut() {
            Some(w) => w.flush(),
            None => Ok(()),
        }
    }

    pub fn events(&self) -> Vec<SuggestionEvent> {
        self.inner.lock().expect("sink lock").events.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("sink lock").events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Default)]
pub struct ServiceCounters {
    pub bad_requests: AtomicU64,
    pub backend_unavailable: AtomicU64,
}

pub struct ServiceState {
    pub engine: SuggestionEngine,
    pub backend: Box<dyn ModelBackend>,
    pub telemetry: TelemetrySink,
    pub counters: ServiceCounters,
}

impl ServiceState {
    pub fn new(engine: SuggestionEngine, backend: Box<dyn ModelBackend>, telemetry: TelemetrySink) -> Self {
        ServiceState {
            engine,
            backend,
            telemetry,
            counters: ServiceCounters::default(),
        }
    }

    pub fn handle_suggest(&self, request: &SuggestRequest) -> Result<SuggestResponse, ServiceError> {
        let started = Instant::now();
        let result = self.suggest_inner(request, started);
        match &result {
            Err(ServiceError::BadRequest(_)) => self.counters.bad_requests.fetch_add(1, Ordering::Relaxed),
            Err(ServiceError::BackendUnavailable(_)) => {
                self.counters.backend_unavailable.fetch_add(1, Ordering::Relaxed)
            }
            _ => 0,
        };
        result
    }

    fn suggest_inner(&self, request: &SuggestRequest, started: Instant) -> Result<SuggestResponse, ServiceError> {
        if request.request_id.is_empty() {
            return Err(ServiceError::BadRequest("request_id is empty".into()));
        }
        let lines = request.content_after_paste.split('\n').count();
        if !request.region.fits(lines) {
            return Err(ServiceError::BadRequest(format!(
                "region {}..={} does not fit {} lines",
                request.region.start_line, request.region.end_line, lines
            )));
        }
        let input = PasteInput {
            file_path: &request.file_path,
            language: &request.language,
            content_after_paste: &request.content_after_paste,
            region: request.region,
        };
        let outcome = self.engine.run(input, &self.backend).map_err(|e| match e {
            EngineError::Backend(BackendError::Unavailable(m)) => ServiceError::BackendUnavailable(m),
            EngineError::Backend(BackendError::MalformedResponse(m)) => ServiceError::BackendUnavailable(m),
            other => ServiceError::BadRequest(other.to_string()),
        })?;
        let suggestion = outcome.suggestion.map(|s| SuggestionBody {
            patch_text: s.patch.render(),
            preview_region_lines: s.preview_region_lines,
            score: s.score,
        });
        if suggestion.is_some() {
            self.telemetry.register(&request.request_id);
        }
        let total_ms = started.elapsed().as_secs_f64() * 1e3;
        Ok(SuggestResponse {
            suggestion,
            engine_latency_ms: (total_ms - outcome.model_latency_ms).max(0.0),
            model_latency_ms: outcome.model_latency_ms,
            request_id: request.request_id.clone(),
        })
    }

    pub fn handle_telemetry(&self, event: SuggestionEvent) -> Result<(), ServiceError> {
        self.telemetry.record(event)
    }

    pub fn health(&self) -> Health {
        Health {
            status: "ok",
            engine: self.engine.counters(),
            bad_requests: self.counters.bad_requests.load(Ordering::Relaxed),
            backend_unavailable: self.counters.backend_unavailable.load(Ordering::Relaxed),
            telemetry_events: self.telemetry.len(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Health {
    pub status: &'static str,
    pub engine: CounterSnapshot,
    pub bad_requests: u64,
    pub backend_unavailable: u64,
    pub telemetry_events: usize,
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(e.to_string()))
}

async fn suggest_route(
    State(state): State<Arc<ServiceState>>,
    body: Bytes,
) -> Result<Json<SuggestResponse>, ServiceError> {
    let request: SuggestRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(e) => {
            state.counters.bad_requests.fetch_add(1, Ordering::Relaxed);
            return Err(e);
        }
    };
    let response = tokio::task::spawn_blocking(move || state.handle_suggest(&request))
        .await
        .map_err(|e| ServiceError::Io(e.to_string()))??;
    Ok(Json(response))
}

async fn telemetry_route(
    State(state): State<Arc<ServiceState>>,
    body: Bytes,
) -> Result<Json<serde_json::Value>, ServiceError> {
    let event: SuggestionEvent = parse_body(&body)?;
    state.handle_telemetry(event)?;
    state.telemetry.flush().map_err(|e| ServiceError::Io(e.to_string()))?;
    Ok(Json(serde_json::json!({ "ack": true })))
}

async fn health_route(State(state): State<Arc<ServiceState>>) -> Json<Health> {
    Json(state.health())
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/v1/suggest", post(suggest_route))
        .route("/v1/telemetry", post(telemetry_route))
        .route("/v1/healthz", get(health_route))
        .with_state(state)
}

/// Serves until the listener fails or the future is dropped.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<ServiceState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    /// Scripted responses, loaded from a newline-delimited file of
    /// `{"prompt" | "fingerprint", "patch_text"}` records.
    Scripted {
        #[serde(default)]
        script: Option<PathBuf>,
    },
    Remote {
        endpoint: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_timeout_ms() -> u64 {
    2_000
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Scripted { script: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    pub telemetry_log: Option<PathBuf>,
    pub backend: BackendConfig,
    pub engine: EngineConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8080".into(),
            telemetry_log: None,
            backend: BackendConfig::default(),
            engine: EngineConfig::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

#[derive(Debug, Deserialize)]
struct ScriptRecord {
    #[serde(default)]
    prompt: Option<String>,
    #[serde(default)]
    fingerprint: Option<String>,
    patch_text: String,
}

/// Loads a script file for [`ScriptedBackend`].
pub fn load_script<R: BufRead>(reader: R) -> anyhow::Result<ScriptedBackend> {
    let mut backend = ScriptedBackend::default();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ScriptRecord =
            serde_json::from_str(&line).map_err(|e| anyhow::anyhow!("script line {}: {e}", n + 1))?;
        match (record.prompt, record.fingerprint) {
            (Some(p), _) => backend.insert_prompt(&p, record.patch_text),
            (None, Some(f)) => backend.insert_fingerprint(f, record.patch_text),
            (None, None) => anyhow::bail!("script line {}: needs a prompt or a fingerprint", n + 1),
        }
    }
    Ok(backend)
}

pub fn build_backend(config: &BackendConfig) -> anyhow::Result<Box<dyn ModelBackend>> {
    Ok(match config {
        BackendConfig::Scripted { script: None } => Box::new(ScriptedBackend::default()),
        BackendConfig::Scripted { script: Some(path) } => {
            let file = File::open(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
            Box::new(load_script(BufReader::new(file))?)
        }
        BackendConfig::Remote { endpoint, timeout_ms } => Box::new(RemoteBackend::new(
            endpoint.clone(),
            Duration::from_millis(*timeout_ms),
        )?),
    })
}

pub fn build_state(config: &ServiceConfig) -> anyhow::Result<ServiceState> {
    let engine = SuggestionEngine::new(config.engine.clone())?;
    let backend = build_backend(&config.backend)?;
    let telemetry = match &config.telemetry_log {
        Some(path) => TelemetrySink::append_to(path)?,
        None => TelemetrySink::in_memory(),
    };
    Ok(ServiceState::new(engine, backend, telemetry))
}
