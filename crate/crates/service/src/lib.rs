//! HTTP API for live face-act annotation.
//!
//! Annotators identify themselves with the `X-Annotator-Id` header. A
//! session walks one conversation utterance by utterance; each utterance is
//! labeled either by answering flowchart questions or by direct multi-label
//! entry. Every state change carries the session version the client last
//! saw, and stale versions are rejected with 409.

mod session;
mod store;

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use facedyn::corpus::{serialize_corpus, Outcome as DonationOutcome};
use facedyn::taxonomy::{FaceAct, FlowNode, Role};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use session::{Event, Outcome, Session};
pub use store::Store;

pub const ANNOTATOR_HEADER: &str = "x-annotator-id";

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("missing {ANNOTATOR_HEADER} header")]
    Unauthorized,
    #[error("{0}")]
    Forbidden(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::Unauthorized => StatusCode::UNAUTHORIZED,
            ApiError::Forbidden(_) => StatusCode::FORBIDDEN,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if let ApiError::Internal(m) = &self {
            log::error!("{m}");
        }
        (
            self.status(),
            Json(ErrorBody {
                error: self.to_string(),
            }),
        )
            .into_response()
    }
}

/// Server options.
#[derive(Debug, Clone, Default)]
pub struct Options {
    /// Allowed browser origin; any origin when `None`.
    pub cors_origin: Option<String>,
}

pub fn router(store: Arc<Store>, options: &Options) -> Result<Router, ApiError> {
    let origin = match &options.cors_origin {
        None => AllowOrigin::from(Any),
        Some(o) => AllowOrigin::exact(
            HeaderValue::from_str(o).map_err(|e| ApiError::BadRequest(format!("bad CORS origin {o:?}: {e}")))?,
        ),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods(Any)
        .allow_headers(Any);
    Ok(Router::new()
        .route("/conversations", get(list_conversations))
        .route("/conversations/{id}", get(get_conversation))
        .route("/flowchart", get(get_flowchart))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/next", get(next_item))
        .route("/sessions/{id}/answer", post(answer))
        .route("/sessions/{id}/label", post(label))
        .route("/sessions/{id}/undo", post(undo))
        .route("/agreement", get(agreement))
        .route("/export", get(export))
        .layer(cors)
        .with_state(store))
}

/// Bind and serve until the process is stopped.
pub async fn serve(addr: SocketAddr, store: Arc<Store>, options: &Options) -> Result<(), ApiError> {
    let app = router(store, options)?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ApiError::Internal(format!("cannot bind {addr}: {e}")))?;
    log::info!("listening on {addr}");
    axum::serve(listener, app)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))
}

fn annotator(headers: &HeaderMap) -> Result<String, ApiError> {
    headers
        .get(ANNOTATOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(str::to_string)
        .ok_or(ApiError::Unauthorized)
}

type Shared = State<Arc<Store>>;

#[derive(Serialize)]
struct ConversationSummary {
    id: String,
    utterances: usize,
    outcome: DonationOutcome,
}

async fn list_conversations(State(store): Shared) -> Json<Vec<ConversationSummary>> {
    Json(
        store
            .corpus()
            .conversations
            .iter()
            .map(|c| ConversationSummary {
                id: c.id.clone(),
                utterances: c.len(),
                outcome: c.outcome,
            })
            .collect(),
    )
}

#[derive(Serialize)]
struct UtteranceView {
    index: usize,
    turn: Option<u32>,
    role: Role,
    text: String,
}

#[derive(Serialize)]
struct ConversationView {
    id: String,
    outcome: DonationOutcome,
    utterances: Vec<UtteranceView>,
}

async fn get_conversation(State(store): Shared, Path(id): Path<String>) -> Result<Json<ConversationView>, ApiError> {
    let c = store.conversation(&id)?;
    Ok(Json(ConversationView {
        id: c.id.clone(),
        outcome: c.outcome,
        utterances: c
            .utterances
            .iter()
            .map(|u| UtteranceView {
                index: u.index,
                turn: u.turn,
                role: u.role,
                text: u.text.clone(),
            })
            .collect(),
    }))
}

async fn get_flowchart(State(store): Shared) -> Response {
    (
        [(header::CONTENT_TYPE, "application/json")],
        store.flowchart().to_json(),
    )
        .into_response()
}

#[derive(Deserialize)]
struct NewSession {
    conversation: String,
}

#[derive(Serialize)]
struct SessionView {
    id: String,
    annotator: String,
    conversation: String,
    version: usize,
    cursor: usize,
    done: bool,
    labels: Vec<Option<BTreeSet<FaceAct>>>,
    path: Vec<String>,
}

impl From<&Session> for SessionView {
    fn from(s: &Session) -> Self {
        SessionView {
            id: s.id.clone(),
            annotator: s.annotator.clone(),
            conversation: s.conversation.clone(),
            version: s.version(),
            cursor: s.cursor,
            done: s.done(),
            labels: s.labels.clone(),
            path: s.path.clone(),
        }
    }
}

async fn create_session(
    State(store): Shared,
    headers: HeaderMap,
    Json(body): Json<NewSession>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let who = annotator(&headers)?;
    let s = store.create_session(&who, &body.conversation)?;
    Ok((StatusCode::CREATED, Json(SessionView::from(&s))))
}

async fn get_session(
    State(store): Shared,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<SessionView>, ApiError> {
    let s = store.session(&id, &annotator(&headers)?)?;
    Ok(Json(SessionView::from(&s)))
}

#[derive(Serialize)]
struct NextView {
    session: SessionView,
    utterance: Option<UtteranceView>,
    node: Option<FlowNode>,
}

fn next_view(store: &Store, s: &Session) -> Result<NextView, ApiError> {
    let (utterance, node) = if s.done() {
        (None, None)
    } else {
        let u = &store.conversation(&s.conversation)?.utterances[s.cursor];
        (
            Some(UtteranceView {
                index: u.index,
                turn: u.turn,
                role: u.role,
                text: u.text.clone(),
            }),
            Some(s.node(store.flowchart())?.clone()),
        )
    };
    Ok(NextView {
        session: SessionView::from(s),
        utterance,
        node,
    })
}

async fn next_item(
    State(store): Shared,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<NextView>, ApiError> {
    let s = store.session(&id, &annotator(&headers)?)?;
    Ok(Json(next_view(&store, &s)?))
}

#[derive(Deserialize)]
struct AnswerBody {
    version: usize,
    answer: String,
}

#[derive(Deserialize)]
struct LabelBody {
    version: usize,
    labels: Vec<String>,
}

#[derive(Deserialize)]
struct UndoBody {
    version: usize,
}

#[derive(Serialize)]
struct StepView {
    /// Labels committed by this request, if any.
    recorded: Option<BTreeSet<FaceAct>>,
    reverted: bool,
    #[serde(flatten)]
    next: NextView,
}

fn step_view(store: &Store, s: &Session, outcome: Outcome) -> Result<Json<StepView>, ApiError> {
    let (recorded, reverted) = match outcome {
        Outcome::Recorded(l) => (Some(l), false),
        Outcome::Reverted => (None, true),
        Outcome::Advanced => (None, false),
    };
    Ok(Json(StepView {
        recorded,
        reverted,
        next: next_view(store, s)?,
    }))
}

async fn answer(
    State(store): Shared,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(body): Json<AnswerBody>,
) -> Result<Json<StepView>, ApiError> {
    let who = annotator(&headers)?;
    let (s, o) = store.submit(&id, &who, body.version, Event::Answer { answer: body.answer })?;
    step_view(&store, &s, o)
}

async fn label(
    State(store): Shared,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(body): Json<LabelBody>,
) -> Result<Json<StepView>, ApiError> {
    let who = annotator(&headers)?;
    let labels = body
        .labels
        .iter()
        .map(|l| l.parse::<FaceAct>().map_err(|e| ApiError::Unprocessable(e.to_string())))
        .collect::<Result<BTreeSet<_>, _>>()?;
    let (s, o) = store.submit(&id, &who, body.version, Event::Label { labels })?;
    step_view(&store, &s, o)
}

async fn undo(
    State(store): Shared,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(body): Json<UndoBody>,
) -> Result<Json<StepView>, ApiError> {
    let who = annotator(&headers)?;
    let (s, o) = store.submit(&id, &who, body.version, Event::Undo)?;
    step_view(&store, &s, o)
}

#[derive(Deserialize)]
struct PairQuery {
    a: String,
    b: String,
}

#[derive(Serialize)]
struct AgreementView {
    a: String,
    b: String,
    n: usize,
    observed: f64,
    expected: f64,
    kappa: f64,
}

async fn agreement(State(store): Shared, Query(q): Query<PairQuery>) -> Result<Json<AgreementView>, ApiError> {
    let ag = store.agreement(&q.a, &q.b)?;
    Ok(Json(AgreementView {
        a: q.a,
        b: q.b,
        n: ag.n,
        observed: ag.observed,
        expected: ag.expected,
        kappa: ag.kappa,
    }))
}

#[derive(Deserialize)]
struct ExportQuery {
    annotator: Option<String>,
}

/// Finished conversations of one annotator (the `annotator` query
/// parameter, else the header) in the corpus wire format.
async fn export(State(store): Shared, headers: HeaderMap, Query(q): Query<ExportQuery>) -> Result<Response, ApiError> {
    let who = match q.annotator {
        Some(a) => a,
        None => annotator(&headers)?,
    };
    let corpus = store.export(&who)?;
    Ok((
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        serialize_corpus(&corpus),
    )
        .into_response())
}
