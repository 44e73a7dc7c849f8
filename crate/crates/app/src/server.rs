//! HTTP session service. Each session holds one decoding state; requests on
//! the same session are serialized.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use spd_core::decode::{reset, DecodeState, Decoder, Draft, Selection, SpdParams};
use spd_core::lm::LanguageModel;
use spd_core::ngram::{NGramEnsemble, SmoothingParams};
use spd_core::vocab::Vocab;
use tokio::sync::OwnedMutexGuard;
use tower_http::services::ServeDir;

use crate::backend::{load_backend, load_ngram};
use crate::error::AppError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusyPolicy {
    /// Queue behind the running request.
    Wait,
    /// Answer 409 immediately.
    Reject,
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub vocab: Arc<Vocab>,
    pub busy: BusyPolicy,
    pub idle_timeout: Duration,
    /// Seeds session ids; random when absent.
    pub seed: Option<u64>,
    pub static_dir: Option<PathBuf>,
}

impl ServerConfig {
    pub fn new(vocab: Vocab) -> Self {
        Self {
            vocab: Arc::new(vocab),
            busy: BusyPolicy::Wait,
            idle_timeout: Duration::from_secs(15 * 60),
            seed: None,
            static_dir: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub backend: String,
    #[serde(default)]
    pub ngram_path: Option<String>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_steps")]
    pub steps_default: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub pool: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub reset_every: Option<usize>,
    /// Stop token as a vocabulary string.
    #[serde(default)]
    pub stop: Option<String>,
}

fn default_k() -> usize {
    SpdParams::default().k
}
fn default_steps() -> usize {
    SpdParams::default().steps
}
fn default_alpha() -> f64 {
    SmoothingParams::default().alpha
}
fn default_delta() -> f64 {
    SmoothingParams::default().delta
}
fn default_tau() -> f64 {
    SpdParams::default().temperature
}

struct Session {
    config: SessionConfig,
    params: SpdParams,
    model: Arc<dyn LanguageModel>,
    ngram: Option<Arc<NGramEnsemble>>,
    state: Option<DecodeState>,
    forwards_used: u64,
}

struct Slot {
    session: Arc<tokio::sync::Mutex<Session>>,
    touched: Mutex<Instant>,
}

pub struct AppState {
    config: ServerConfig,
    sessions: Mutex<HashMap<String, Arc<Slot>>>,
    models: Mutex<HashMap<String, Arc<dyn LanguageModel>>>,
    ids: Mutex<ChaCha8Rng>,
}

impl AppState {
    pub fn new(config: ServerConfig) -> Arc<Self> {
        let rng = match config.seed {
            Some(s) => ChaCha8Rng::seed_from_u64(s),
            None => ChaCha8Rng::seed_from_u64(
                std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_nanos() as u64)
                    .unwrap_or(0)
                    ^ std::process::id() as u64,
            ),
        };
        Arc::new(Self {
            config,
            sessions: Mutex::new(HashMap::new()),
            models: Mutex::new(HashMap::new()),
            ids: Mutex::new(rng),
        })
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    /// Drops sessions untouched for longer than the idle timeout.
    pub fn evict_idle(&self, now: Instant) -> usize {
        let mut sessions = self.sessions.lock().unwrap();
        let before = sessions.len();
        let timeout = self.config.idle_timeout;
        sessions.retain(|_, slot| now.saturating_duration_since(*slot.touched.lock().unwrap()) < timeout);
        before - sessions.len()
    }

    fn model(&self, backend: &str) -> Result<Arc<dyn LanguageModel>, ApiError> {
        if let Some(m) = self.models.lock().unwrap().get(backend) {
            return Ok(m.clone());
        }
        let m = load_backend(backend, &self.config.vocab)?;
        self.models.lock().unwrap().insert(backend.to_string(), m.clone());
        Ok(m)
    }

    fn next_id(&self) -> (String, u64) {
        let mut bytes = [0u8; 16];
        self.ids.lock().unwrap().fill_bytes(&mut bytes);
        let id = uuid::Builder::from_random_bytes(bytes).into_uuid();
        let seed = u64::from_le_bytes(bytes[..8].try_into().unwrap());
        (id.to_string(), seed)
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        let slot = self
            .sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "SESSION_NOT_FOUND", format!("no session {id}")))?;
        *slot.touched.lock().unwrap() = Instant::now();
        Ok(slot)
    }

    async fn lock(&self, id: &str) -> Result<OwnedMutexGuard<Session>, ApiError> {
        let slot = self.slot(id)?;
        match self.config.busy {
            BusyPolicy::Wait => Ok(slot.session.clone().lock_owned().await),
            BusyPolicy::Reject => slot.session.clone().try_lock_owned().map_err(|_| {
                ApiError::new(StatusCode::CONFLICT, "BUSY", format!("session {id} is handling another request"))
            }),
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn validation(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "VALIDATION", message)
    }
}

impl From<AppError> for ApiError {
    fn from(e: AppError) -> Self {
        let message = e.to_string();
        match e {
            AppError::UnknownBackend(_) => Self::new(StatusCode::BAD_REQUEST, "UNKNOWN_BACKEND", message),
            AppError::NgramNotFound(_) => Self::new(StatusCode::BAD_REQUEST, "NGRAM_NOT_FOUND", message),
            AppError::Core(e) => e.into(),
            AppError::File { .. } => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "IO", message),
            AppError::Usage(_) => Self::validation(message),
        }
    }
}

impl From<spd_core::Error> for ApiError {
    fn from(e: spd_core::Error) -> Self {
        let message = e.to_string();
        match e {
            spd_core::Error::VocabMismatch { .. } => Self::new(StatusCode::BAD_REQUEST, "VOCAB_MISMATCH", message),
            spd_core::Error::Io(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "IO", message),
            _ => Self::validation(message),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::validation(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

#[derive(Debug, Serialize)]
pub struct DraftView {
    pub text: String,
    pub tokens: Vec<u32>,
    pub score: f64,
    pub log_score: f64,
    pub finished: bool,
}

#[derive(Debug, Serialize)]
pub struct DraftsResponse {
    pub drafts: Vec<DraftView>,
    /// Forward passes spent by this request.
    pub forwards_used: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompleteRequest {
    pub prefix: String,
    #[serde(default)]
    pub steps: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectRequest {
    pub draft_index: usize,
    #[serde(default)]
    pub extend_steps: usize,
}

fn views(vocab: &Vocab, drafts: &[Draft]) -> Result<Vec<DraftView>, ApiError> {
    drafts
        .iter()
        .map(|d| {
            Ok(DraftView {
                text: vocab.detokenize(&d.tokens)?,
                tokens: d.tokens.clone(),
                score: d.score(),
                log_score: d.log_score,
                finished: d.finished,
            })
        })
        .collect()
}

pub fn router(state: Arc<AppState>) -> Router {
    let static_dir = state.config.static_dir.clone();
    let api = Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session).delete(delete_session))
        .route("/v1/sessions/{id}/complete", post(complete))
        .route("/v1/sessions/{id}/select", post(select))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Result<Json<SessionConfig>, JsonRejection>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let Json(mut config) = body?;
    let model = app.model(&config.backend)?;
    let vocab = &app.config.vocab;
    let ngram = match &config.ngram_path {
        Some(p) => Some(Arc::new(load_ngram(std::path::Path::new(p), vocab)?)),
        None => None,
    };
    let stop_id = match &config.stop {
        Some(s) => Some(
            vocab
                .id_of(s)
                .ok_or_else(|| ApiError::validation(format!("stop token `{s}` not in vocabulary")))?,
        ),
        None => None,
    };
    let (id, derived_seed) = app.next_id();
    let seed = *config.seed.get_or_insert(derived_seed);
    let params = SpdParams {
        k: config.k,
        pool: config.pool,
        steps: config.steps_default,
        smoothing: SmoothingParams {
            alpha: config.alpha,
            delta: config.delta,
        },
        temperature: config.tau,
        reset_every: config.reset_every,
        ngram_enabled: ngram.is_some(),
        stop_id,
        seed,
    };
    params.validate(model.vocab_size())?;
    let session = Session {
        config,
        params,
        model,
        ngram,
        state: None,
        forwards_used: 0,
    };
    app.sessions.lock().unwrap().insert(
        id.clone(),
        Arc::new(Slot {
            session: Arc::new(tokio::sync::Mutex::new(session)),
            touched: Mutex::new(Instant::now()),
        }),
    );
    Ok(Json(json!({ "session_id": id })))
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let session = app.lock(&id).await?;
    let drafts = match &session.state {
        Some(s) => views(&app.config.vocab, s.drafts())?,
        None => Vec::new(),
    };
    Ok(Json(json!({
        "session_id": id,
        "config": session.config,
        "drafts": drafts,
        "forwards_used": session.forwards_used,
    })))
}

async fn delete_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    match app.sessions.lock().unwrap().remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "SESSION_NOT_FOUND", format!("no session {id}"))),
    }
}

/// Runs decoding work for a locked session off the async workers.
async fn with_session<F>(app: &Arc<AppState>, id: &str, work: F) -> Result<Json<DraftsResponse>, ApiError>
where
    F: FnOnce(&mut Session, &Vocab) -> Result<u64, ApiError> + Send + 'static,
{
    let mut guard = app.lock(id).await?;
    let vocab = app.config.vocab.clone();
    tokio::task::spawn_blocking(move || {
        let session = &mut *guard;
        let used = work(session, &vocab)?;
        session.forwards_used += used;
        let state = session.state.as_ref().expect("work leaves a state");
        Ok(Json(DraftsResponse {
            drafts: views(&vocab, state.drafts())?,
            forwards_used: used,
        }))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()))?
}

async fn complete(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<CompleteRequest>, JsonRejection>,
) -> Result<Json<DraftsResponse>, ApiError> {
    let Json(req) = body?;
    if req.prefix.is_empty() {
        return Err(ApiError::validation("prefix must be nonempty"));
    }
    with_session(&app, &id, move |s, vocab| {
        let prefix = vocab.tokenize(&req.prefix)?;
        let steps = req.steps.unwrap_or(s.params.steps);
        if steps == 0 {
            return Err(ApiError::validation("steps must be at least 1"));
        }
        let decoder = Decoder::new(&*s.model, s.ngram.as_deref(), s.params.clone())?;
        let mut state = decoder.start(&prefix)?;
        decoder.extend(&mut state, steps)?;
        let used = state.forwards_used();
        s.state = Some(state);
        Ok(used)
    })
    .await
}

async fn select(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<SelectRequest>, JsonRejection>,
) -> Result<Json<DraftsResponse>, ApiError> {
    let Json(req) = body?;
    with_session(&app, &id, move |s, _| {
        let decoder = Decoder::new(&*s.model, s.ngram.as_deref(), s.params.clone())?;
        let state = s
            .state
            .as_mut()
            .ok_or_else(|| ApiError::validation("no drafts to select from; call complete first"))?;
        let before = state.forwards_used();
        reset(state, &*s.model, Selection::Index(req.draft_index))?;
        decoder.extend(state, req.extend_steps)?;
        Ok(state.forwards_used() - before)
    })
    .await
}

/// Binds and serves until interrupted, evicting idle sessions periodically.
pub async fn serve(config: ServerConfig, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let state = AppState::new(config);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    println!("listening on http://{}", listener.local_addr()?);
    let janitor = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(30));
        loop {
            tick.tick().await;
            janitor.evict_idle(Instant::now());
        }
    });
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
