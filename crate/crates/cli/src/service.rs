//! HTTP/JSON API over collection sessions.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use rationale_core::env::{Action, EnvConfig, StepOutcome};
use rationale_core::serialize::SymbolAlphabet;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::session::{Phase, Session, SessionError, StateView, PAUSE_SECONDS};

pub struct Service {
    env: EnvConfig,
    journal: Option<PathBuf>,
    next_id: AtomicU64,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

pub type AppState = Arc<Service>;

impl Service {
    pub fn new(env: EnvConfig, journal: Option<PathBuf>) -> AppState {
        Arc::new(Service { env, journal, next_id: AtomicU64::new(1), sessions: RwLock::new(HashMap::new()) })
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::NotFound(format!("session {id}")).into())
    }

    /// Rewrites the session's journal file, if journaling is on.
    fn journal(&self, s: &Session) -> Result<(), ApiError> {
        if let Some(dir) = &self.journal {
            std::fs::create_dir_all(dir).map_err(ApiError::internal)?;
            std::fs::write(dir.join(format!("{}.jsonl", s.id)), s.export()).map_err(ApiError::internal)?;
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl ApiError {
    fn internal(e: impl std::fmt::Display) -> Self {
        ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let code = match e {
            SessionError::NotFound(_) => StatusCode::NOT_FOUND,
            SessionError::Conflict(_) => StatusCode::CONFLICT,
            SessionError::BadRequest(_) => StatusCode::BAD_REQUEST,
        };
        ApiError(code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Default, Deserialize)]
pub struct CreateBody {
    pub participant: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub phase: Phase,
    pub state: StateView,
    pub pending_action: Option<Action>,
    pub records: usize,
}

fn view(s: &Session) -> SessionView {
    SessionView {
        id: s.id.clone(),
        phase: s.phase,
        state: StateView::of(s.state()),
        pending_action: s.pending_action(),
        records: s.records().len(),
    }
}

async fn create(State(app): State<AppState>, body: Option<Json<CreateBody>>) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let body = body.map(|Json(b)| b).unwrap_or_default();
    let env = match body.seed {
        Some(seed) => app.env.with_seed(seed),
        None => app.env.clone(),
    };
    let id = format!("s{:04}", app.next_id.fetch_add(1, Ordering::Relaxed));
    let session = Session::new(id.clone(), &env, body.participant);
    let v = view(&session);
    app.sessions.write().unwrap().insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(v)))
}

async fn show(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let s = app.session(&id)?;
    let s = s.lock().unwrap();
    Ok(Json(view(&s)))
}

#[derive(Debug, Deserialize)]
pub struct PhaseBody {
    pub phase: Phase,
}

async fn set_phase(State(app): State<AppState>, Path(id): Path<String>, Json(body): Json<PhaseBody>) -> ApiResult<Json<SessionView>> {
    let s = app.session(&id)?;
    let mut s = s.lock().unwrap();
    s.advance(body.phase)?;
    Ok(Json(view(&s)))
}

#[derive(Debug, Deserialize)]
pub struct ActionBody {
    pub action: Action,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ActionResponse {
    pub state: StateView,
    pub outcome: StepOutcome,
    pub pause_seconds: u32,
}

async fn act(State(app): State<AppState>, Path(id): Path<String>, Json(body): Json<ActionBody>) -> ApiResult<Json<ActionResponse>> {
    let s = app.session(&id)?;
    let mut s = s.lock().unwrap();
    let outcome = s.act(body.action)?;
    Ok(Json(ActionResponse { state: StateView::of(s.state()), outcome, pause_seconds: PAUSE_SECONDS }))
}

#[derive(Debug, Deserialize)]
pub struct TextBody {
    pub text: String,
}

async fn rationale(State(app): State<AppState>, Path(id): Path<String>, Json(body): Json<TextBody>) -> ApiResult<impl IntoResponse> {
    let s = app.session(&id)?;
    let mut s = s.lock().unwrap();
    let r = s.rationale(&body.text)?;
    app.journal(&s)?;
    Ok((StatusCode::CREATED, Json(r)))
}

async fn redo(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let s = app.session(&id)?;
    let mut s = s.lock().unwrap();
    let r = s.redo()?;
    app.journal(&s)?;
    Ok((StatusCode::CREATED, Json(r)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReviewItem {
    pub record: rationale_core::corpus::CorpusRecord,
    /// Board before the action, one line per row.
    pub board: String,
}

async fn records(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Vec<ReviewItem>>> {
    let s = app.session(&id)?;
    let s = s.lock().unwrap();
    let width = s.state().width();
    let items = s
        .records()
        .iter()
        .map(|r| {
            let board = r
                .grid
                .chars()
                .collect::<Vec<_>>()
                .chunks(width)
                .map(|row| row.iter().collect::<String>())
                .collect::<Vec<_>>()
                .join("\n");
            ReviewItem { record: r.clone(), board }
        })
        .collect();
    Ok(Json(items))
}

async fn edit(
    State(app): State<AppState>,
    Path((id, rid)): Path<(String, String)>,
    Json(body): Json<TextBody>,
) -> ApiResult<Json<rationale_core::corpus::CorpusRecord>> {
    let s = app.session(&id)?;
    let mut s = s.lock().unwrap();
    let r = s.edit(&rid, &body.text)?;
    app.journal(&s)?;
    Ok(Json(r))
}

async fn export(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let s = app.session(&id)?;
    let s = s.lock().unwrap();
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], s.export()))
}

async fn alphabet() -> Json<SymbolAlphabet> {
    Json(SymbolAlphabet::default())
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/alphabet", get(alphabet))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(show))
        .route("/sessions/{id}/phase", post(set_phase))
        .route("/sessions/{id}/action", post(act))
        .route("/sessions/{id}/rationale", post(rationale))
        .route("/sessions/{id}/redo", post(redo))
        .route("/sessions/{id}/records", get(records))
        .route("/sessions/{id}/records/{rid}", patch(edit))
        .route("/sessions/{id}/export", get(export))
        .with_state(app)
}
