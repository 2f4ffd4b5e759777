//! HTTP JSON API used by the web front end.
//!
//! | method | path                | body                    |
//! |--------|---------------------|-------------------------|
//! | POST   | `/parse`            | `{"question"}`          |
//! | POST   | `/feedback`         | `{"parse_id", "label"}` |
//! | GET    | `/annotations/next` | bearer token            |
//! | POST   | `/annotations/{id}` | `{"gold_sql"}`, bearer  |
//! | POST   | `/retrain`          |                         |
//! | GET    | `/status`           |                         |
//! | GET    | `/examples`         |                         |

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{Any, CorsLayer};

use crate::anonymize::{substitute_surfaces, AnonymizationMap};
use crate::dataset::Example;
use crate::error::Result;
use crate::executor::{ExecError, ExecutionResult};
use crate::learner::{
    save_state, AnnotationError, FeedbackAction, FeedbackLabel, FeedbackRecord, Learner, StageReport,
};
use crate::model::{PredictOutcome, Seq2Seq};
use crate::text;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub annotator_token: String,
    pub example_utterances: Vec<String>,
    /// Learner state is written here after every change.
    pub state_dir: Option<PathBuf>,
    /// Start a retrain after every N accepted annotations.
    pub auto_retrain_every: Option<usize>,
    /// Allowed browser origin; any origin when unset.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            annotator_token: "annotator".into(),
            example_utterances: Vec::new(),
            state_dir: None,
            auto_retrain_every: None,
            cors_origin: None,
        }
    }
}

/// Immutable model version that parse requests run against.
pub struct Snapshot {
    pub id: u64,
    pub model: Option<Seq2Seq>,
}

struct ParseEntry {
    question: String,
    sql: String,
    executed: bool,
    labeled: bool,
}

pub struct AppState {
    learner: Mutex<Learner>,
    snapshot: RwLock<Arc<Snapshot>>,
    parses: Mutex<HashMap<String, ParseEntry>>,
    retraining: AtomicBool,
    accepted_annotations: AtomicU64,
    config: ServiceConfig,
}

impl AppState {
    pub fn new(learner: Learner, model: Option<Seq2Seq>, config: ServiceConfig) -> Arc<AppState> {
        Arc::new(AppState {
            learner: Mutex::new(learner),
            snapshot: RwLock::new(Arc::new(Snapshot { id: 1, model })),
            parses: Mutex::new(HashMap::new()),
            retraining: AtomicBool::new(false),
            accepted_annotations: AtomicU64::new(0),
            config,
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().unwrap().clone()
    }

    pub fn with_learner<T>(&self, f: impl FnOnce(&mut Learner) -> T) -> T {
        f(&mut self.learner.lock().unwrap())
    }

    pub fn is_retraining(&self) -> bool {
        self.retraining.load(Ordering::SeqCst)
    }

    fn persist(&self, learner: &Learner) {
        if let Some(dir) = &self.config.state_dir {
            if let Err(e) = save_state(learner, dir) {
                log::error!("cannot save learner state: {e}");
            }
        }
    }

    /// Closes the current stage and trains its successor, then swaps the
    /// snapshot in. Returns false if a retrain is already running.
    pub fn retrain_blocking(&self) -> Result<bool> {
        if self.retraining.swap(true, Ordering::SeqCst) {
            return Ok(false);
        }
        let out = self.retrain_inner();
        self.retraining.store(false, Ordering::SeqCst);
        out.map(|_| true)
    }

    fn retrain_inner(&self) -> Result<()> {
        let job = self.with_learner(|l| l.prepare_stage());
        let model = job.train()?;
        {
            let mut snap = self.snapshot.write().unwrap();
            let id = snap.id + 1;
            *snap = Arc::new(Snapshot { id, model });
        }
        let mut learner = self.learner.lock().unwrap();
        learner.finish_stage(&job);
        self.persist(&learner);
        log::info!("stage {} closed; now serving stage {}", job.stage, learner.stage());
        Ok(())
    }

    /// Starts a background retrain; false if one is already running.
    fn spawn_retrain(self: &Arc<Self>) -> bool {
        if self.retraining.swap(true, Ordering::SeqCst) {
            return false;
        }
        let state = self.clone();
        tokio::task::spawn_blocking(move || {
            if let Err(e) = state.retrain_inner() {
                log::error!("retraining failed: {e}");
            }
            state.retraining.store(false, Ordering::SeqCst);
        });
        true
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MentionView {
    /// Word span `[start, end)` over `tokens`.
    pub start: usize,
    pub end: usize,
    pub type_base: String,
    pub surface: String,
    pub placeholder: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QueryFailure {
    /// One of `sql`, `timeout`, `connection`, `incorrect_types`, `no_model`.
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum QueryResults {
    Rows(ExecutionResult),
    Failed { error: QueryFailure },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParseResponse {
    pub parse_id: String,
    pub question: String,
    pub tokens: Vec<String>,
    pub sql: Option<String>,
    pub anonymized_sql: Option<String>,
    pub results: QueryResults,
    pub mentions: Vec<MentionView>,
    pub paraphrase_assist: Option<String>,
    pub example_utterances: Vec<String>,
    pub snapshot_id: u64,
}

/// A training utterance other than `current` whose anonymized SQL equals
/// `anonymized_sql`, with the current entity surfaces filled back in.
pub fn find_paraphrase_assist(
    anonymized_sql: &str,
    current: &[String],
    map: &AnonymizationMap,
    training: &[Example],
) -> Option<String> {
    let target = text::canonical_sql(anonymized_sql);
    training
        .iter()
        .filter(|e| e.sql == target && e.utterance != current)
        .find(|e| {
            e.utterance
                .iter()
                .all(|w| !text::is_placeholder(w) || map.get(w).is_some())
        })
        .map(|e| substitute_surfaces(&e.utterance, map))
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn failure(kind: &str, message: impl Into<String>) -> QueryResults {
    QueryResults::Failed {
        error: QueryFailure {
            kind: kind.into(),
            message: message.into(),
        },
    }
}

#[derive(Deserialize)]
struct ParseRequest {
    question: String,
}

async fn parse(State(state): State<Arc<AppState>>, Json(req): Json<ParseRequest>) -> Response {
    let tokens = text::words(&req.question);
    if tokens.is_empty() {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "question is empty");
    }
    let snap = state.snapshot();
    let (index, db, training) = state.with_learner(|l| (l.index.clone(), l.db.clone(), l.training_set().examples().to_vec()));
    let anon = index.anonymize_utterance(&tokens);
    let mentions = anon
        .mentions
        .iter()
        .map(|m| MentionView {
            start: m.start,
            end: m.end,
            type_base: text::split_placeholder(&m.placeholder).map_or(String::new(), |p| p.0.to_string()),
            surface: anon.map.get(&m.placeholder).map_or(m.text.clone(), |b| b.surface.clone()),
            placeholder: m.placeholder.clone(),
        })
        .collect();

    let (sql, anonymized_sql, results) = match &snap.model {
        None => (None, None, failure("no_model", "no model has been trained yet")),
        Some(model) => match model.predict(&index, &req.question) {
            Err(e) => (None, None, failure("no_model", e.to_string())),
            Ok(p) => {
                let anonymized = Some(p.anonymized_sql.clone());
                match p.outcome {
                    PredictOutcome::IncorrectTypes { unbound } => (
                        None,
                        anonymized,
                        failure("incorrect_types", format!("unbound placeholders: {}", unbound.join(", "))),
                    ),
                    PredictOutcome::Sql { sql } => {
                        let results = match db.execute_default(&sql) {
                            Ok(r) => QueryResults::Rows(r),
                            Err(e @ ExecError::Timeout(_)) => failure("timeout", e.to_string()),
                            Err(e @ ExecError::Connection(_)) => failure("connection", e.to_string()),
                            Err(e @ ExecError::Sql(_)) => failure("sql", e.to_string()),
                        };
                        (Some(sql), anonymized, results)
                    }
                }
            }
        },
    };
    let paraphrase_assist = anonymized_sql
        .as_deref()
        .and_then(|s| find_paraphrase_assist(s, &anon.tokens, &anon.map, &training));

    let parse_id = format!("{:032x}", rand::random::<u128>());
    state.parses.lock().unwrap().insert(
        parse_id.clone(),
        ParseEntry {
            question: req.question.clone(),
            sql: sql.clone().unwrap_or_default(),
            executed: matches!(results, QueryResults::Rows(_)),
            labeled: false,
        },
    );
    Json(ParseResponse {
        parse_id,
        question: req.question,
        tokens,
        sql,
        anonymized_sql,
        results,
        mentions,
        paraphrase_assist,
        example_utterances: state.config.example_utterances.clone(),
        snapshot_id: snap.id,
    })
    .into_response()
}

#[derive(Deserialize)]
struct FeedbackRequest {
    parse_id: String,
    label: FeedbackLabel,
}

async fn feedback(State(state): State<Arc<AppState>>, Json(req): Json<FeedbackRequest>) -> Response {
    let (question, sql, executed) = {
        let mut parses = state.parses.lock().unwrap();
        let Some(entry) = parses.get_mut(&req.parse_id) else {
            return error(StatusCode::NOT_FOUND, "unknown parse_id");
        };
        if entry.labeled {
            return error(StatusCode::CONFLICT, "feedback already recorded for this parse");
        }
        entry.labeled = true;
        (entry.question.clone(), entry.sql.clone(), entry.executed)
    };
    let (action, size, queue) = state.with_learner(|l| {
        let record = FeedbackRecord::new(&question, &sql, req.label, l.stage(), executed);
        let action = l.process_feedback(record);
        state.persist(l);
        (action, l.training_set().len(), l.pending_count())
    });
    let mut body = serde_json::to_value(action).unwrap();
    body["training_size"] = json!(size);
    body["queue_depth"] = json!(queue);
    if let FeedbackAction::QueuedForAnnotation { task_id } = action {
        body["task_id"] = json!(task_id);
    }
    Json(body).into_response()
}

fn authorized(state: &AppState, headers: &HeaderMap) -> bool {
    let expected = format!("Bearer {}", state.config.annotator_token);
    headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v == expected)
}

async fn next_annotation(State(state): State<Arc<AppState>>, headers: HeaderMap) -> Response {
    if !authorized(&state, &headers) {
        return error(StatusCode::UNAUTHORIZED, "missing or invalid annotator token");
    }
    match state.with_learner(|l| l.next_task().cloned()) {
        Some(task) => Json(task).into_response(),
        None => error(StatusCode::NOT_FOUND, "no pending tasks"),
    }
}

#[derive(Deserialize)]
struct AnnotationRequest {
    gold_sql: String,
}

async fn submit_annotation(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<u64>,
    Json(req): Json<AnnotationRequest>,
) -> Response {
    if !authorized(&state, &headers) {
        return error(StatusCode::UNAUTHORIZED, "missing or invalid annotator token");
    }
    let out = state.with_learner(|l| {
        let out = l.apply_annotation(id, &req.gold_sql);
        if out.is_ok() {
            state.persist(l);
        }
        (out, l.training_set().len())
    });
    match out {
        (Ok(accepted), size) => {
            let n = state.accepted_annotations.fetch_add(1, Ordering::SeqCst) + 1;
            if let Some(every) = state.config.auto_retrain_every {
                if every > 0 && n % every as u64 == 0 {
                    state.spawn_retrain();
                }
            }
            Json(json!({ "task_id": accepted.task_id, "added": accepted.added, "training_size": size })).into_response()
        }
        (Err(AnnotationError::UnknownTask(_)), _) => error(StatusCode::NOT_FOUND, "unknown annotation task"),
        (Err(AnnotationError::AlreadyDone(_)), _) => error(StatusCode::CONFLICT, "task already annotated"),
        (Err(AnnotationError::Rejected(e)), _) => (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(json!({ "error": "gold SQL does not execute", "diagnostics": e })),
        )
            .into_response(),
    }
}

async fn retrain(State(state): State<Arc<AppState>>) -> Response {
    let stage = state.with_learner(|l| l.stage());
    if state.spawn_retrain() {
        (StatusCode::ACCEPTED, Json(json!({ "started": true, "closing_stage": stage }))).into_response()
    } else {
        error(StatusCode::CONFLICT, "retraining already in progress")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StatusResponse {
    pub stage: usize,
    pub training_size: usize,
    pub queue_depth: usize,
    pub last_report: Option<StageReport>,
    pub retraining: bool,
    pub snapshot_id: u64,
}

async fn status(State(state): State<Arc<AppState>>) -> Json<StatusResponse> {
    let snapshot_id = state.snapshot().id;
    let retraining = state.is_retraining();
    Json(state.with_learner(|l| StatusResponse {
        stage: l.stage(),
        training_size: l.training_set().len(),
        queue_depth: l.pending_count(),
        last_report: l.reports().last().cloned(),
        retraining,
        snapshot_id,
    }))
}

async fn examples(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({ "examples": state.config.example_utterances }))
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    let cors = match state.config.cors_origin.as_deref().and_then(|o| o.parse::<HeaderValue>().ok()) {
        Some(origin) => cors.allow_origin(origin),
        None => cors.allow_origin(Any),
    };
    Router::new()
        .route("/parse", post(parse))
        .route("/feedback", post(feedback))
        .route("/annotations/next", get(next_annotation))
        .route("/annotations/{id}", post(submit_annotation))
        .route("/retrain", post(retrain))
        .route("/status", get(status))
        .route("/examples", get(examples))
        .layer(cors)
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
