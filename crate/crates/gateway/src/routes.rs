use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use oceanvoice_core::agents::Turn;
use oceanvoice_core::pipeline::{
    valid_session_id, EventSink, EventType, PipelineError, PipelineResult, SessionView,
    TranscriptRecord,
};
use oceanvoice_core::triggers::{VisualCatalogEntry, NONE_TOKEN};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;

use crate::AppState;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/catalog", get(catalog))
        .route("/api/session/{id}", get(session))
        .route("/api/session/{id}/visual", post(force_visual))
        .route("/api/query", post(query))
        .route("/api/reload/rules", post(reload_rules))
        .route("/api/transcript/{id}", get(transcript))
        .route("/api/station/{id}/utterance", post(utterance))
        .route("/ws/events", get(events))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

fn check_session_id(id: &str) -> Result<(), ApiError> {
    if valid_session_id(id) {
        Ok(())
    } else {
        Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("invalid session id `{id}`"),
        ))
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub rules_version: u64,
    pub indexed_sentences: usize,
    pub sessions: usize,
}

async fn health(State(app): State<AppState>) -> Json<HealthResponse> {
    let snap = app.engine.snapshot();
    Json(HealthResponse {
        status: "ok".into(),
        rules_version: snap.rules.version,
        indexed_sentences: snap.index.len(),
        sessions: app.sessions.ids().len(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CatalogResponse {
    /// The sentinel meaning "no central visual"; always accepted.
    pub none_token: String,
    pub entries: Vec<VisualCatalogEntry>,
}

async fn catalog(State(app): State<AppState>) -> Json<CatalogResponse> {
    Json(CatalogResponse {
        none_token: NONE_TOKEN.into(),
        entries: app.engine.catalog().entries().to_vec(),
    })
}

/// Server view of a session. `view` equals the fold of every stream event
/// for the session up to and including `stream_seq`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub view: SessionView,
    pub stream_seq: u64,
    pub runs: u64,
    pub history: Vec<Turn>,
}

async fn snapshot(app: &AppState, id: &str) -> SessionSnapshot {
    let (runs, history) = match app.sessions.get(id) {
        Some(slot) => {
            let ctx = slot.context();
            let ctx = ctx.lock().await;
            (ctx.runs, ctx.history.turns().cloned().collect())
        }
        None => (0, Vec::new()),
    };
    let (view, stream_seq) = app.hub.view_with_seq(id);
    SessionSnapshot {
        session_id: id.to_string(),
        view: view.unwrap_or_else(|| app.hub.empty_view(id)),
        stream_seq,
        runs,
        history,
    }
}

async fn session(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionSnapshot>, ApiError> {
    check_session_id(&id)?;
    Ok(Json(snapshot(&app, &id).await))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ForceVisual {
    pub token: String,
}

/// Operator override of the central visual.
async fn force_visual(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<ForceVisual>,
) -> Result<Json<SessionSnapshot>, ApiError> {
    check_session_id(&id)?;
    let catalog = app.engine.catalog();
    let entry = catalog.get(&body.token);
    if entry.is_none() && body.token != NONE_TOKEN {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("unknown visual token `{}`", body.token),
        ));
    }
    app.hub.emit(
        &id,
        EventType::VisualSelected,
        json!({
            "token": body.token,
            "rationale": "",
            "title": entry.map(|e| e.title.clone()),
            "kind": entry.map(|e| e.kind),
            "source": "operator",
            "at_ms": app.clock.now_ms(),
        }),
    );
    Ok(Json(snapshot(&app, &id).await))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QueryRequest {
    pub session_id: String,
    pub text: String,
}

async fn query(
    State(app): State<AppState>,
    Json(req): Json<QueryRequest>,
) -> Result<Json<PipelineResult>, ApiError> {
    check_session_id(&req.session_id)?;
    match app.run_query(&req.session_id, &req.text).await {
        Ok(r) => Ok(Json(r)),
        Err(PipelineError::EmptyQuery) => Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "query text is empty",
        )),
        Err(e) => {
            tracing::error!(error = %e, "query failed");
            Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
        }
    }
}

async fn reload_rules(State(app): State<AppState>) -> Response {
    if app.engine.rules_path().is_none() {
        return ApiError::new(StatusCode::CONFLICT, "no rules file configured").into_response();
    }
    let engine = app.engine.clone();
    let outcome = tokio::task::spawn_blocking(move || engine.reload_rules())
        .await
        .expect("reload task panicked");
    match outcome {
        Ok(version) => {
            tracing::info!(version, "trigger rules reloaded");
            Json(json!({ "version": version })).into_response()
        }
        Err(e) => {
            let version = app.engine.rules_version();
            tracing::warn!(error = %e, version, "rules reload rejected");
            (
                StatusCode::UNPROCESSABLE_ENTITY,
                Json(json!({ "error": e.to_string(), "line": e.line(), "version": version })),
            )
                .into_response()
        }
    }
}

async fn transcript(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Vec<TranscriptRecord>>, ApiError> {
    check_session_id(&id)?;
    let Some(store) = app.engine.store() else {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "transcripts are not persisted"));
    };
    store
        .read(&id)
        .map(Json)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

#[derive(Debug, Deserialize)]
struct Utterance {
    text: String,
}

/// Queues what the next recording at a station will hear.
async fn utterance(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<Utterance>,
) -> Result<StatusCode, ApiError> {
    let station = app
        .station(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no station `{id}`")))?;
    station.microphone().push(body.text);
    Ok(StatusCode::ACCEPTED)
}

#[derive(Debug, Deserialize)]
struct StreamFilter {
    session: Option<String>,
}

async fn events(
    State(app): State<AppState>,
    Query(filter): Query<StreamFilter>,
    ws: WebSocketUpgrade,
) -> Response {
    ws.on_upgrade(move |socket| stream_events(app, filter.session, socket))
}

async fn stream_events(app: AppState, session: Option<String>, mut socket: WebSocket) {
    let mut rx = app.hub.subscribe();
    let mut shutdown = app.shutdown.clone();
    loop {
        tokio::select! {
            ev = rx.recv() => match ev {
                Ok(ev) => {
                    if session.as_deref().is_some_and(|s| s != ev.session_id) {
                        continue;
                    }
                    let text = serde_json::to_string(&ev).expect("event serializes");
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        return;
                    }
                }
                Err(RecvError::Lagged(missed)) => {
                    tracing::warn!(missed, "dropping slow event subscriber");
                    let _ = socket
                        .send(Message::Close(Some(CloseFrame {
                            code: 1008,
                            reason: "subscriber fell behind".into(),
                        })))
                        .await;
                    return;
                }
                Err(RecvError::Closed) => return,
            },
            msg = socket.recv() => match msg {
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => return,
                Some(Ok(_)) => {}
            },
            _ = shutdown.changed() => {
                let _ = socket
                    .send(Message::Close(Some(CloseFrame {
                        code: 1001,
                        reason: "server shutting down".into(),
                    })))
                    .await;
                return;
            }
        }
    }
}
