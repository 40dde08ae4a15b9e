//! HTTP prediction endpoints and the `/stream` replay socket.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cortexkey_core::ingest::{read_windows, TrialWindow};
use cortexkey_core::model::{ModelArtifact, Prediction};
use cortexkey_core::replay::{PredictionEvent, ReplaySession, ReplayState};
use serde::Deserialize;
use tokio::net::TcpListener;
use tower_http::cors::CorsLayer;
use tracing::{debug, info, warn};

use crate::protocol::{
    ClientFrame, ControlAction, ErrorBody, ModelInfo, ModelList, PredictRequest, ReplayCreated, ReplayRequest,
    ServerFrame,
};

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown or already attached replay session `{0}`")]
    UnknownSession(String),
    #[error("unknown window set `{0}`")]
    UnknownWindows(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match self {
            ApiError::UnknownModel(_) | ApiError::UnknownSession(_) | ApiError::UnknownWindows(_) => {
                StatusCode::NOT_FOUND
            }
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<cortexkey_core::Error> for ApiError {
    fn from(e: cortexkey_core::Error) -> Self {
        if e.is_data_error() {
            ApiError::BadRequest(e.to_string())
        } else {
            ApiError::Internal(e.to_string())
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { error: self.to_string() };
        (self.status(), Json(body)).into_response()
    }
}

struct Inner {
    /// Loaded models never change after start-up.
    models: HashMap<String, Arc<ModelArtifact>>,
    order: Vec<String>,
    windows_dir: Option<PathBuf>,
    /// Sessions created by `POST /replay` and not yet attached to a socket.
    pending: Mutex<HashMap<String, ReplaySession>>,
    predict_ordinal: AtomicU64,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(models: Vec<(String, ModelArtifact)>, windows_dir: Option<PathBuf>) -> Self {
        let order = models.iter().map(|(id, _)| id.clone()).collect();
        let models = models.into_iter().map(|(id, m)| (id, Arc::new(m))).collect();
        Self(Arc::new(Inner {
            models,
            order,
            windows_dir,
            pending: Mutex::new(HashMap::new()),
            predict_ordinal: AtomicU64::new(0),
        }))
    }

    fn model(&self, id: &str) -> Result<Arc<ModelArtifact>, ApiError> {
        self.0.models.get(id).cloned().ok_or_else(|| ApiError::UnknownModel(id.to_string()))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/models", get(list_models))
        .route("/predict", post(predict))
        .route("/replay", post(create_replay))
        .route("/stream", get(stream))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serve until ctrl-c.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn list_models(State(state): State<AppState>) -> Json<ModelList> {
    let models = state
        .0
        .order
        .iter()
        .map(|id| {
            let m = &state.0.models[id];
            ModelInfo {
                id: id.clone(),
                kind: m.kind(),
                accuracy_meta: m.meta.clone(),
            }
        })
        .collect();
    Json(ModelList { models })
}

/// Run a prediction on the blocking pool, timing only the model itself.
async fn predict_timed(model: Arc<ModelArtifact>, window: Vec<f64>) -> Result<(Prediction, Duration), ApiError> {
    tokio::task::spawn_blocking(move || {
        let started = Instant::now();
        let p = model.predict(&window)?;
        Ok((p, started.elapsed()))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn predict(
    State(state): State<AppState>,
    Json(req): Json<PredictRequest>,
) -> Result<Json<PredictionEvent>, ApiError> {
    let model = state.model(&req.model)?;
    let shape = model.window;
    let bad_row = req.window.iter().position(|r| r.len() != shape.n_channels);
    if req.window.len() != shape.n_times || bad_row.is_some() {
        let found = match bad_row {
            Some(i) => format!("row {i} has {} values", req.window[i].len()),
            None => format!("{} rows", req.window.len()),
        };
        return Err(ApiError::BadRequest(format!(
            "window must be {} rows of {} values; {found}",
            shape.n_times, shape.n_channels
        )));
    }
    let flat: Vec<f64> = req.window.into_iter().flatten().collect();
    let (prediction, latency) = predict_timed(model, flat).await?;
    let ordinal = state.0.predict_ordinal.fetch_add(1, Ordering::Relaxed);
    Ok(Json(PredictionEvent::new(ordinal, None, prediction, latency)?))
}

fn check_shape(model: &ModelArtifact, windows: &[TrialWindow]) -> Result<(), ApiError> {
    let w = &windows[0];
    if (w.n_times, w.n_channels) != (model.window.n_times, model.window.n_channels) {
        return Err(ApiError::BadRequest(format!(
            "windows are {}x{} but the model expects {}x{}",
            w.n_times, w.n_channels, model.window.n_times, model.window.n_channels
        )));
    }
    Ok(())
}

async fn create_replay(
    State(state): State<AppState>,
    Json(req): Json<ReplayRequest>,
) -> Result<Json<ReplayCreated>, ApiError> {
    let model = state.model(&req.model)?;
    let dir = state
        .0
        .windows_dir
        .clone()
        .ok_or_else(|| ApiError::BadRequest("server has no window directory".into()))?;
    let stem = &req.windows;
    if stem.is_empty() || stem.contains(['/', '\\']) || stem.starts_with('.') {
        return Err(ApiError::BadRequest(format!("invalid window set name `{stem}`")));
    }
    let path = dir.join(format!("{stem}.windows.bin"));
    if !path.is_file() {
        return Err(ApiError::UnknownWindows(stem.clone()));
    }
    let windows = tokio::task::spawn_blocking(move || read_windows(path))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    if windows.is_empty() {
        return Err(ApiError::BadRequest(format!("window set `{stem}` is empty")));
    }
    check_shape(&model, &windows)?;
    let session = ReplaySession::new(Arc::new(windows), req.model, req.speed)?;
    let token = uuid::Uuid::new_v4().to_string();
    state.0.pending.lock().expect("session map poisoned").insert(token.clone(), session);
    Ok(Json(ReplayCreated { session: token }))
}

#[derive(Debug, Deserialize)]
struct StreamQuery {
    session: String,
}

async fn stream(
    State(state): State<AppState>,
    Query(q): Query<StreamQuery>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let session = state
        .0
        .pending
        .lock()
        .expect("session map poisoned")
        .remove(&q.session)
        .ok_or(ApiError::UnknownSession(q.session))?;
    Ok(ws.on_upgrade(move |socket| async move {
        if let Err(e) = drive(socket, state, session).await {
            debug!(error = %e, "stream closed");
        }
    }))
}

async fn send(socket: &mut WebSocket, frame: &ServerFrame) -> anyhow::Result<()> {
    let text = serde_json::to_string(frame)?;
    socket.send(Message::Text(text.into())).await?;
    Ok(())
}

async fn send_state(socket: &mut WebSocket, session: &ReplaySession) -> anyhow::Result<()> {
    send(socket, &ServerFrame::State { value: session.state() }).await
}

/// Predict the window under the cursor and record it.
async fn emit(state: &AppState, session: &mut ReplaySession) -> anyhow::Result<Option<PredictionEvent>> {
    let Some((_, window)) = session.next_window() else {
        return Ok(None);
    };
    let values = window.values.clone();
    let model = state.model(session.model_id())?;
    let (prediction, latency) = predict_timed(model, values).await?;
    Ok(Some(session.record(prediction, latency)?))
}

/// Apply one client frame and say what the scheduler should do next.
/// Frames that cannot be applied leave the session untouched.
fn apply(state: &AppState, session: &mut ReplaySession, frame: ClientFrame) -> Control {
    match frame {
        ClientFrame::Control { action, value } => match action {
            ControlAction::Play => {
                session.play();
                Control::Reschedule
            }
            ControlAction::Pause => {
                session.pause();
                Control::Reschedule
            }
            ControlAction::Step => {
                if session.step() {
                    Control::EmitOne
                } else {
                    Control::Nothing
                }
            }
            ControlAction::Seek => match value {
                Some(v) if v.is_finite() && v >= 0.0 => {
                    session.seek(v as usize);
                    Control::Reschedule
                }
                _ => Control::Nothing,
            },
            ControlAction::Speed => match value.map(|v| session.set_speed(v)) {
                Some(Ok(())) => Control::Reschedule,
                _ => Control::Nothing,
            },
        },
        ClientFrame::SelectModel { id } => {
            if let Ok(m) = state.model(&id) {
                if check_shape(&m, session.windows()).is_ok() {
                    session.select_model(id);
                }
            }
            Control::Nothing
        }
    }
}

enum Control {
    Nothing,
    Reschedule,
    EmitOne,
}

/// One replay per connection. Events are paced on a monotonic schedule:
/// each is due one interval after the previous one, and the first (or the
/// first after resuming) goes out immediately.
async fn drive(mut socket: WebSocket, state: AppState, mut session: ReplaySession) -> anyhow::Result<()> {
    send_state(&mut socket, &session).await?;
    let mut last_emit: Option<Instant> = None;
    let mut due = session.interval().map(|_| Instant::now());
    loop {
        let timer = async {
            match due {
                Some(t) => tokio::time::sleep_until(t.into()).await,
                None => std::future::pending().await,
            }
        };
        tokio::select! {
            msg = socket.recv() => {
                let text = match msg {
                    None | Some(Ok(Message::Close(_))) => return Ok(()),
                    Some(Err(e)) => return Err(e.into()),
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(_)) => continue,
                };
                let was_playing = session.state() == ReplayState::Playing;
                match serde_json::from_str::<ClientFrame>(&text) {
                    Ok(frame) => match apply(&state, &mut session, frame) {
                        Control::EmitOne => {
                            if let Some(event) = emit(&state, &mut session).await? {
                                last_emit = Some(Instant::now());
                                send(&mut socket, &ServerFrame::Prediction(event)).await?;
                            }
                            due = None;
                        }
                        Control::Reschedule => {
                            due = match session.interval() {
                                Some(gap) if was_playing => Some(last_emit.map_or_else(Instant::now, |t| t + gap)),
                                Some(_) => Some(Instant::now()),
                                None => None,
                            };
                        }
                        Control::Nothing => {}
                    },
                    Err(e) => warn!(error = %e, "ignoring malformed client frame"),
                }
                send_state(&mut socket, &session).await?;
            }
            _ = timer => {
                let scheduled = due.take().expect("timer only fires when due");
                if let Some(event) = emit(&state, &mut session).await? {
                    last_emit = Some(scheduled);
                    send(&mut socket, &ServerFrame::Prediction(event)).await?;
                }
                if session.state() == ReplayState::Finished {
                    send_state(&mut socket, &session).await?;
                } else if let Some(gap) = session.interval() {
                    due = Some(scheduled + gap);
                }
            }
        }
    }
}
