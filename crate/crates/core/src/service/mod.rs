//! HTTP JSON facade over [`AdaptiveSession`] for the live console.
//!
//! Each session carries a revision counter that increments on every
//! accepted outcome and every undo. Mutating requests may send the revision
//! they were based on in the `X-Revision` header; a mismatch is rejected with
//! 409 so one client cannot overwrite another's shot.

mod config;

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

pub use config::{FieldError, PolicyName, Preset, SessionConfig, SessionRequest};

use crate::error::{Error, Result};
use crate::protocols::{AdaptiveSession, SessionSnapshot, SessionStep};
use crate::units::{micro_from_kelvin, micro_from_seconds, seconds_from_micro};

pub const REVISION_HEADER: &str = "x-revision";
/// Largest number of posterior points sent per response.
pub const MAX_POSTERIOR_POINTS: usize = 256;

struct Entry {
    id: String,
    created_unix_ms: u64,
    revision: u64,
    config: SessionConfig,
    session: AdaptiveSession,
}

/// Shared session store.
#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Arc<Mutex<Entry>>>>>,
}

#[derive(Serialize, Deserialize)]
struct StoredSession {
    id: String,
    created_unix_ms: u64,
    revision: u64,
    config: SessionConfig,
    snapshot: SessionSnapshot,
}

#[derive(Serialize, Deserialize)]
struct StoreFile {
    sessions: Vec<StoredSession>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, id: &str) -> Option<Arc<Mutex<Entry>>> {
        self.sessions.read().expect("store lock").get(id).cloned()
    }

    /// Writes every session to `path` as JSON.
    pub fn save(&self, path: &Path) -> Result<()> {
        let store = self.sessions.read().expect("store lock");
        let mut sessions: Vec<StoredSession> = store
            .values()
            .map(|e| {
                let e = e.lock().expect("session lock");
                StoredSession {
                    id: e.id.clone(),
                    created_unix_ms: e.created_unix_ms,
                    revision: e.revision,
                    config: e.config.clone(),
                    snapshot: e.session.snapshot(),
                }
            })
            .collect();
        sessions.sort_by(|a, b| (a.created_unix_ms, &a.id).cmp(&(b.created_unix_ms, &b.id)));
        std::fs::write(path, serde_json::to_string_pretty(&StoreFile { sessions })?)?;
        Ok(())
    }

    /// Restores sessions saved by [`AppState::save`], replaying each record.
    pub fn load(path: &Path) -> Result<Self> {
        let store: StoreFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let state = Self::new();
        {
            let mut map = state.sessions.write().expect("store lock");
            for s in store.sessions {
                let session = AdaptiveSession::restore(&s.snapshot)?;
                let entry = Entry {
                    id: s.id.clone(),
                    created_unix_ms: s.created_unix_ms,
                    revision: s.revision,
                    config: s.config,
                    session,
                };
                map.insert(s.id, Arc::new(Mutex::new(entry)));
            }
        }
        Ok(state)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/health", get(|| async { Json(serde_json::json!({ "status": "ok" })) }))
        .route("/api/sessions", post(create_session).get(list_sessions))
        .route("/api/sessions/{id}", get(get_session).delete(delete_session))
        .route("/api/sessions/{id}/outcomes", post(post_outcome))
        .route("/api/sessions/{id}/undo", post(undo))
        .route("/api/sessions/{id}/infogain", get(get_infogain))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Binds `addr` and serves until Ctrl-C. Sessions are loaded from and
/// saved back to `state_path` when given.
pub fn serve_blocking(addr: &str, state_path: Option<PathBuf>, log: &mut dyn Write) -> Result<()> {
    let state = match &state_path {
        Some(p) if p.exists() => AppState::load(p)?,
        _ => AppState::new(),
    };
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        writeln!(log, "listening on http://{}", listener.local_addr()?)?;
        axum::serve(listener, router(state.clone()))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok::<(), Error>(())
    })?;
    if let Some(p) = &state_path {
        state.save(p)?;
        writeln!(log, "saved {} sessions to {}", state.len(), p.display())?;
    }
    Ok(())
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, body: serde_json::json!({ "error": message.into() }) }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no session {id}"))
    }

    fn invalid(fields: Vec<FieldError>) -> Self {
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: serde_json::json!({ "error": "validation failed", "fields": fields }),
        }
    }

    fn stale(current: u64) -> Self {
        Self {
            status: StatusCode::CONFLICT,
            body: serde_json::json!({ "error": "stale revision", "revision": current }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorView {
    pub theta_uk: Vec<f64>,
    /// Probability density per µK.
    pub density_per_uk: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfoGainView {
    pub t_us: Vec<f64>,
    pub gain: Vec<f64>,
    pub next_time_us: f64,
    pub revision: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepView {
    pub shot: usize,
    pub t_us: f64,
    pub n: u32,
    pub estimate_uk: f64,
    pub delta_uk: f64,
    pub next_time_us: f64,
    pub overridden: bool,
}

impl StepView {
    fn new(i: usize, s: &SessionStep) -> Self {
        Self {
            shot: i + 1,
            t_us: micro_from_seconds(s.time),
            n: s.atoms,
            estimate_uk: micro_from_kelvin(s.estimate),
            delta_uk: micro_from_kelvin(s.delta),
            next_time_us: micro_from_seconds(s.next_time),
            overridden: s.overridden,
        }
    }
}

/// Full session state as returned by every session endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionEnvelope {
    pub id: String,
    pub created_unix_ms: u64,
    pub revision: u64,
    pub config: SessionConfig,
    pub shots: usize,
    pub estimate_uk: f64,
    pub delta_uk: f64,
    pub next_time_us: f64,
    pub posterior: PosteriorView,
    pub info_gain: InfoGainView,
    pub trace: Vec<StepView>,
}

/// Evenly spaced node indices (hence log-spaced θ) including both ends.
fn downsample_indices(len: usize, max: usize) -> Vec<usize> {
    if len <= max {
        return (0..len).collect();
    }
    (0..max).map(|k| ((k * (len - 1)) as f64 / (max - 1) as f64).round() as usize).collect()
}

fn info_gain_view(e: &Entry) -> std::result::Result<InfoGainView, ApiError> {
    let curve = e.session.info_gain_curve().map_err(internal)?;
    Ok(InfoGainView {
        t_us: curve.times_micros(),
        gain: curve.gains,
        next_time_us: micro_from_seconds(e.session.next_time()),
        revision: e.revision,
    })
}

fn envelope(e: &Entry) -> ApiResult<SessionEnvelope> {
    let post = e.session.posterior();
    let idx = downsample_indices(post.thetas().len(), MAX_POSTERIOR_POINTS);
    let bar = e.session.estimate();
    Ok(SessionEnvelope {
        id: e.id.clone(),
        created_unix_ms: e.created_unix_ms,
        revision: e.revision,
        config: e.config.clone(),
        shots: e.session.shots(),
        estimate_uk: micro_from_kelvin(bar.estimate),
        delta_uk: micro_from_kelvin(bar.delta),
        next_time_us: micro_from_seconds(e.session.next_time()),
        posterior: PosteriorView {
            theta_uk: idx.iter().map(|&i| micro_from_kelvin(post.thetas()[i])).collect(),
            density_per_uk: idx.iter().map(|&i| post.densities()[i] * 1e-6).collect(),
        },
        info_gain: info_gain_view(e)?,
        trace: e.session.trace().iter().enumerate().map(|(i, s)| StepView::new(i, s)).collect(),
    })
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

fn with_revision(env: SessionEnvelope, status: StatusCode) -> Response {
    let rev = HeaderValue::from(env.revision);
    let mut resp = (status, Json(env)).into_response();
    resp.headers_mut().insert(REVISION_HEADER, rev);
    resp
}

fn expected_revision(headers: &HeaderMap) -> ApiResult<Option<u64>> {
    let Some(value) = headers.get(REVISION_HEADER) else {
        return Ok(None);
    };
    value
        .to_str()
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .map(Some)
        .ok_or_else(|| ApiError::invalid(vec![FieldError::new("x-revision", "must be a nonnegative integer")]))
}

fn body_error(e: serde_json::Error) -> ApiError {
    ApiError::invalid(vec![FieldError::new("body", e.to_string())])
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(internal)?
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let request: SessionRequest =
        if body.iter().all(u8::is_ascii_whitespace) { SessionRequest::default() } else { serde_json::from_slice(&body).map_err(body_error)? };
    let config = request.resolve().map_err(ApiError::invalid)?;
    blocking(move || {
        let session = config.build().map_err(ApiError::invalid)?;
        let id = uuid::Uuid::new_v4().to_string();
        let entry = Entry { id: id.clone(), created_unix_ms: now_ms(), revision: 0, config, session };
        let env = envelope(&entry)?;
        state.sessions.write().expect("store lock").insert(id, Arc::new(Mutex::new(entry)));
        Ok(with_revision(env, StatusCode::CREATED))
    })
    .await
}

#[derive(Serialize)]
struct SessionSummary {
    id: String,
    created_unix_ms: u64,
    revision: u64,
    shots: usize,
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<SessionSummary>> {
    let store = state.sessions.read().expect("store lock");
    let mut out: Vec<SessionSummary> = store
        .values()
        .map(|e| {
            let e = e.lock().expect("session lock");
            SessionSummary { id: e.id.clone(), created_unix_ms: e.created_unix_ms, revision: e.revision, shots: e.session.shots() }
        })
        .collect();
    out.sort_by(|a, b| (a.created_unix_ms, &a.id).cmp(&(b.created_unix_ms, &b.id)));
    Json(out)
}

async fn get_session(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let entry = state.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    blocking(move || {
        let e = entry.lock().expect("session lock");
        Ok(with_revision(envelope(&e)?, StatusCode::OK))
    })
    .await
}

async fn delete_session(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<StatusCode> {
    match state.sessions.write().expect("store lock").remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::not_found(&id)),
    }
}

async fn get_infogain(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<InfoGainView>> {
    let entry = state.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    blocking(move || {
        let e = entry.lock().expect("session lock");
        Ok(Json(info_gain_view(&e)?))
    })
    .await
}

/// Body of `POST /api/sessions/{id}/outcomes`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutcomeRequest {
    /// Defaults to the current recommendation.
    t_us: Option<f64>,
    n: serde_json::Value,
    #[serde(default, rename = "override")]
    override_time: bool,
}

fn check_revision(e: &Entry, expected: Option<u64>) -> ApiResult<()> {
    match expected {
        Some(r) if r != e.revision => Err(ApiError::stale(e.revision)),
        _ => Ok(()),
    }
}

async fn post_outcome(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let entry = state.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let expected = expected_revision(&headers)?;
    let request: OutcomeRequest = serde_json::from_slice(&body).map_err(body_error)?;
    blocking(move || {
        let mut e = entry.lock().expect("session lock");
        check_revision(&e, expected)?;
        let n = request
            .n
            .as_i64()
            .ok_or_else(|| ApiError::invalid(vec![FieldError::new("n", format!("must be an integer, got {}", request.n))]))?;
        let next = e.session.next_time();
        let t = match request.t_us {
            None => next,
            Some(t_us) => {
                let t = seconds_from_micro(t_us);
                if !(t_us.is_finite() && t_us >= 0.0) {
                    return Err(ApiError::invalid(vec![FieldError::new("t_us", "must be nonnegative")]));
                }
                let matches = (t - next).abs() <= 1e-9 * next.max(1e-6);
                if !matches && !request.override_time {
                    return Err(ApiError::invalid(vec![FieldError::new(
                        "t_us",
                        format!("recommended release time is {} µs; set override to use another", micro_from_seconds(next)),
                    )]));
                }
                if matches {
                    next
                } else {
                    t
                }
            }
        };
        e.session.submit(t, n).map_err(|err| match err {
            Error::InvalidOutcome { .. } => ApiError::invalid(vec![FieldError::new("n", err.to_string())]),
            Error::DegeneratePosterior => ApiError::invalid(vec![FieldError::new("n", err.to_string())]),
            other => internal(other),
        })?;
        e.revision += 1;
        Ok(with_revision(envelope(&e)?, StatusCode::OK))
    })
    .await
}

async fn undo(State(state): State<AppState>, UrlPath(id): UrlPath<String>, headers: HeaderMap) -> ApiResult<Response> {
    let entry = state.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let expected = expected_revision(&headers)?;
    blocking(move || {
        let mut e = entry.lock().expect("session lock");
        check_revision(&e, expected)?;
        match e.session.undo().map_err(internal)? {
            Some(_) => {
                e.revision += 1;
                Ok(with_revision(envelope(&e)?, StatusCode::OK))
            }
            None => Err(ApiError::new(StatusCode::CONFLICT, "no shot to undo")),
        }
    })
    .await
}
