//! HTTP/JSON exam API.
//!
//! | method | path                              | body                |
//! |--------|-----------------------------------|---------------------|
//! | POST   | `/v1/login`                       | `{ "transcript" }`  |
//! | POST   | `/v1/exams/{exam_id}/sessions`    |                     |
//! | GET    | `/v1/sessions/{session_id}`       |                     |
//! | GET    | `/v1/sessions/{session_id}/prompt`|                     |
//! | POST   | `/v1/sessions/{session_id}/answers`| `{ "transcript" }` |
//! | GET    | `/v1/sessions/{session_id}/result`|                     |
//!
//! Everything except login needs `Authorization: Bearer <token>`. State
//! changes are written to the session log before the response goes out.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use viva_cbt_core::exam_engine::{EngineError, ExamSession, PromptScript, ResultSummary, SessionState};
use viva_cbt_core::normalizer::{HomophoneTable, Transcript};
use viva_cbt_core::question_bank::{Bank, ExamDefinition};

use crate::auth::{match_credential, LoginOutcome, SessionToken, TokenStore};
use crate::session_log::{
    read_and_repair, recover, LogFault, RecoveredSession, SessionEvent, SessionLog, SessionLogEntry, SessionMap,
};

struct LiveSession {
    student_id: String,
    slot: tokio::sync::Mutex<RecoveredSession>,
}

impl LiveSession {
    fn new(recovered: RecoveredSession) -> Arc<Self> {
        Arc::new(Self {
            student_id: recovered.session.student_id.clone(),
            slot: tokio::sync::Mutex::new(recovered),
        })
    }
}

type Live = Arc<LiveSession>;

pub struct AppState {
    bank: Bank,
    table: HomophoneTable,
    tokens: TokenStore,
    sessions: RwLock<HashMap<String, Live>>,
    log: Mutex<SessionLog>,
}

#[derive(Debug, Error)]
pub enum StartupError {
    #[error("cannot open session log: {0}")]
    Io(#[from] std::io::Error),
    #[error("session log is corrupt, refusing to start: {0}")]
    CorruptLog(LogFault),
}

impl AppState {
    pub fn new(bank: Bank, table: HomophoneTable, log: SessionLog, recovered: SessionMap) -> Self {
        let sessions = recovered.into_iter().map(|(id, s)| (id, LiveSession::new(s))).collect();
        Self {
            bank,
            table,
            tokens: TokenStore::default(),
            sessions: RwLock::new(sessions),
            log: Mutex::new(log),
        }
    }

    /// Recovers sessions from the log at `log_path` (trimming a torn final
    /// line) and keeps appending to it.
    pub fn open(bank: Bank, table: HomophoneTable, log_path: &Path) -> Result<Self, StartupError> {
        let contents = read_and_repair(log_path)?;
        if let Some(fault) = contents.fault {
            return Err(StartupError::CorruptLog(fault));
        }
        let sessions = recover(contents.entries, &bank).map_err(|e| StartupError::CorruptLog(e.fault))?;
        let log = SessionLog::open(log_path)?;
        Ok(Self::new(bank, table, log, sessions))
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session map poisoned").len()
    }

    fn exam(&self, exam_id: &str) -> Result<&ExamDefinition, ApiError> {
        self.bank
            .exam(exam_id)
            .ok_or_else(|| ApiError::NotFound(format!("no exam {exam_id:?}")))
    }

    fn write_log(&self, entries: &[SessionLogEntry]) -> Result<(), ApiError> {
        self.log
            .lock()
            .expect("log writer poisoned")
            .append(entries)
            .map_err(|e| ApiError::Internal(format!("session log write failed: {e}")))
    }

    pub fn authorize(&self, headers: &HeaderMap) -> Result<SessionToken, ApiError> {
        let value = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .ok_or(ApiError::Unauthorized)?;
        let token = value.strip_prefix("Bearer ").ok_or(ApiError::Unauthorized)?;
        self.tokens.resolve(token.trim()).ok_or(ApiError::Unauthorized)
    }

    /// Looks up a session the caller owns.
    fn owned_session(&self, token: &SessionToken, session_id: &str) -> Result<Live, ApiError> {
        let live = self
            .sessions
            .read()
            .expect("session map poisoned")
            .get(session_id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("no session {session_id:?}")))?;
        if live.student_id != token.student_id {
            return Err(ApiError::Forbidden);
        }
        Ok(live)
    }

    pub fn login(&self, transcript: &Transcript) -> Result<SessionToken, ApiError> {
        match match_credential(&transcript.raw, &self.bank.students) {
            LoginOutcome::Matched(student) => Ok(self.tokens.issue(&student.student_id)),
            LoginOutcome::NoMatch => Err(ApiError::Unauthorized),
            LoginOutcome::Ambiguous => Err(ApiError::Conflict(
                "credential is registered to more than one student".into(),
            )),
        }
    }

    /// Opens a session; the `started` entry is on disk before this returns.
    pub fn start_session(&self, token: &SessionToken, exam_id: &str) -> Result<ExamSession, ApiError> {
        let exam = self.exam(exam_id)?;
        let session = ExamSession::start(exam, token.student_id.clone());
        self.write_log(&[SessionLogEntry::new(
            1,
            session.session_id.clone(),
            SessionEvent::Started {
                exam_id: exam.exam_id.clone(),
                student_id: token.student_id.clone(),
            },
        )])?;
        self.sessions.write().expect("session map poisoned").insert(
            session.session_id.clone(),
            LiveSession::new(RecoveredSession {
                session: session.clone(),
                last_seq: 1,
            }),
        );
        Ok(session)
    }

    pub async fn view(&self, token: &SessionToken, session_id: &str) -> Result<SessionView, ApiError> {
        let live = self.owned_session(token, session_id)?;
        let live = live.slot.lock().await;
        let s = &live.session;
        Ok(SessionView {
            session_id: s.session_id.clone(),
            exam_id: s.exam_id.clone(),
            state: s.state,
            score: s.score,
            answered: s.answers.len(),
            total: self.exam(&s.exam_id)?.len(),
        })
    }

    pub async fn prompt(&self, token: &SessionToken, session_id: &str) -> Result<PromptResponse, ApiError> {
        let live = self.owned_session(token, session_id)?;
        let mut live = live.slot.lock().await;
        let exam = self.exam(&live.session.exam_id)?;
        let (script, next) = live.session.render_prompt(exam)?;
        if let SessionState::Asking { question } = live.session.state {
            let seq = live.last_seq + 1;
            self.write_log(&[SessionLogEntry::new(
                seq,
                session_id,
                SessionEvent::Prompted { question },
            )])?;
            live.last_seq = seq;
        }
        live.session = next;
        Ok(PromptResponse {
            script,
            state: live.session.state,
        })
    }

    /// Grades one answer. A second submission for the same session while one
    /// is in flight is refused with a conflict.
    pub async fn answer(
        &self,
        token: &SessionToken,
        session_id: &str,
        transcript: Transcript,
    ) -> Result<AnswerResponse, ApiError> {
        let live = self.owned_session(token, session_id)?;
        let mut live = live
            .slot
            .try_lock()
            .map_err(|_| ApiError::Conflict("another answer for this session is being processed".into()))?;
        let exam = self.exam(&live.session.exam_id)?;
        let sub = live.session.submit_transcript(exam, &transcript, &self.table)?;
        let question = live.session.state.question().expect("awaiting state has a question");

        let mut entries = vec![SessionLogEntry::new(
            live.last_seq + 1,
            session_id,
            SessionEvent::Answered {
                question,
                transcript: transcript.raw,
                result: sub.result.clone(),
                record: sub.record.clone(),
                score_delta: sub.session.score - live.session.score,
            },
        )];
        if sub.session.state.is_finished() {
            entries.push(SessionLogEntry::new(
                live.last_seq + 2,
                session_id,
                SessionEvent::Finished {
                    score: sub.session.score,
                    total: exam.len(),
                },
            ));
        }
        self.write_log(&entries)?;
        live.last_seq += entries.len() as u64;
        live.session = sub.session;
        Ok(AnswerResponse {
            feedback: sub.feedback,
            state: live.session.state,
            score: live.session.score,
        })
    }

    pub async fn result(&self, token: &SessionToken, session_id: &str) -> Result<ResultSummary, ApiError> {
        let live = self.owned_session(token, session_id)?;
        let live = live.slot.lock().await;
        let exam = self.exam(&live.session.exam_id)?;
        Ok(live.session.result_summary(exam)?)
    }

    /// Current in-memory state of a session, bypassing authorization.
    pub async fn snapshot(&self, session_id: &str) -> Option<RecoveredSession> {
        let live = self
            .sessions
            .read()
            .expect("session map poisoned")
            .get(session_id)
            .cloned()?;
        let guard = live.slot.lock().await;
        Some(guard.clone())
    }
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("missing or invalid bearer token")]
    Unauthorized,
    #[error("session belongs to another student")]
    Forbidden,
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Unauthorized => StatusCode::UNAUTHORIZED,
            ApiError::Forbidden => StatusCode::FORBIDDEN,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::InvalidState { .. } => ApiError::Conflict(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if let ApiError::Internal(msg) = &self {
            tracing::error!("{msg}");
        }
        (self.status(), Json(json!({ "error": self.to_string() }))).into_response()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TranscriptBody {
    transcript: String,
    #[serde(default)]
    engine_confidence: Option<f64>,
}

fn parse_transcript(body: &[u8]) -> Result<Transcript, ApiError> {
    let body: TranscriptBody = serde_json::from_slice(body)
        .map_err(|e| ApiError::BadRequest(format!("expected {{\"transcript\": string}}: {e}")))?;
    Ok(Transcript {
        raw: body.transcript,
        engine_confidence: body.engine_confidence,
    })
}

#[derive(Serialize, Deserialize)]
pub struct LoginResponse {
    pub token: String,
    pub student_id: String,
}

#[derive(Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub exam_id: String,
    pub state: SessionState,
    pub score: u32,
    pub answered: usize,
    pub total: u32,
}

#[derive(Serialize, Deserialize)]
pub struct PromptResponse {
    pub script: PromptScript,
    pub state: SessionState,
}

#[derive(Serialize, Deserialize)]
pub struct AnswerResponse {
    pub feedback: PromptScript,
    pub state: SessionState,
    pub score: u32,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/login", post(login))
        .route("/v1/exams/{exam_id}/sessions", post(create_session))
        .route("/v1/sessions/{session_id}", get(session_view))
        .route("/v1/sessions/{session_id}/prompt", get(prompt))
        .route("/v1/sessions/{session_id}/answers", post(answer))
        .route("/v1/sessions/{session_id}/result", get(result))
        .with_state(state)
}

type AppRef = State<Arc<AppState>>;

async fn login(State(app): AppRef, body: Bytes) -> Result<Json<LoginResponse>, ApiError> {
    let token = app.login(&parse_transcript(&body)?)?;
    Ok(Json(LoginResponse {
        token: token.token,
        student_id: token.student_id,
    }))
}

async fn create_session(
    State(app): AppRef,
    headers: HeaderMap,
    UrlPath(exam_id): UrlPath<String>,
) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    let token = app.authorize(&headers)?;
    let session = app.start_session(&token, &exam_id)?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "session_id": session.session_id, "state": session.state })),
    ))
}

async fn session_view(
    State(app): AppRef,
    headers: HeaderMap,
    UrlPath(session_id): UrlPath<String>,
) -> Result<Json<SessionView>, ApiError> {
    let token = app.authorize(&headers)?;
    Ok(Json(app.view(&token, &session_id).await?))
}

async fn prompt(
    State(app): AppRef,
    headers: HeaderMap,
    UrlPath(session_id): UrlPath<String>,
) -> Result<Json<PromptResponse>, ApiError> {
    let token = app.authorize(&headers)?;
    Ok(Json(app.prompt(&token, &session_id).await?))
}

async fn answer(
    State(app): AppRef,
    headers: HeaderMap,
    UrlPath(session_id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<AnswerResponse>, ApiError> {
    let token = app.authorize(&headers)?;
    let transcript = parse_transcript(&body)?;
    Ok(Json(app.answer(&token, &session_id, transcript).await?))
}

async fn result(
    State(app): AppRef,
    headers: HeaderMap,
    UrlPath(session_id): UrlPath<String>,
) -> Result<Json<ResultSummary>, ApiError> {
    let token = app.authorize(&headers)?;
    Ok(Json(app.result(&token, &session_id).await?))
}
