use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::sync::broadcast::error::RecvError;

use affect_core::api::{CreateSessionRequest, ModelInfo, SessionResource, TrainJob, TrainRequest, VarianceReport};
use affect_core::realtime::{SessionEvent, SessionState};

use crate::error::{ApiError, ApiResult};
use crate::state::AppState;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/sessions", post(create_session).get(list_sessions))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/start", post(start_session))
        .route("/api/sessions/{id}/stop", post(stop_session))
        .route("/api/sessions/{id}/events", get(events))
        .route("/api/sessions/{id}/variance-report", get(variance_report))
        .route("/api/models", get(list_models))
        .route("/api/train", post(submit_train))
        .route("/api/jobs/{id}", get(get_job))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .with_state(state)
}

/// Rejects malformed JSON bodies with the standard error shape.
struct Body<T>(T);

impl<S, T> axum::extract::FromRequest<S> for Body<T>
where
    S: Send + Sync,
    T: serde::de::DeserializeOwned,
{
    type Rejection = ApiError;

    async fn from_request(req: axum::extract::Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(rejection) => Err(ApiError::validation(rejection.body_text())),
        }
    }
}

async fn create_session(
    State(state): State<AppState>,
    Body(req): Body<CreateSessionRequest>,
) -> ApiResult<(StatusCode, Json<SessionResource>)> {
    let resource = state.create_session(req)?;
    Ok((StatusCode::CREATED, Json(resource)))
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<SessionResource>> {
    Json(state.list_sessions())
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionResource>> {
    Ok(Json(state.get_session(&id)?))
}

async fn start_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionResource>> {
    Ok(Json(state.start_session(&id).await?))
}

async fn stop_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionResource>> {
    Ok(Json(state.stop_session(&id).await?))
}

async fn variance_report(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<VarianceReport>> {
    let report = tokio::task::spawn_blocking(move || state.variance_report(&id))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(report))
}

async fn list_models(State(state): State<AppState>) -> ApiResult<Json<Vec<ModelInfo>>> {
    let models = tokio::task::spawn_blocking(move || state.list_models())
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(models))
}

async fn submit_train(
    State(state): State<AppState>,
    Body(req): Body<TrainRequest>,
) -> ApiResult<(StatusCode, Json<TrainJob>)> {
    Ok((StatusCode::ACCEPTED, Json(state.submit_train_job(req)?)))
}

async fn get_job(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<TrainJob>> {
    Ok(Json(state.get_job(&id)?))
}

async fn events(State(state): State<AppState>, Path(id): Path<String>, ws: WebSocketUpgrade) -> Response {
    let entry = match state.session(&id) {
        Ok(e) => e,
        Err(e) => return e.into_response(),
    };
    ws.on_upgrade(move |socket| stream_events(socket, entry.hub.clone()))
}

fn text(event: &SessionEvent) -> Message {
    Message::Text(serde_json::to_string(event).expect("event serializes").into())
}

/// Sends the snapshot, then live events until STOPPED or the peer leaves.
async fn stream_events(mut socket: WebSocket, hub: std::sync::Arc<crate::hub::Hub>) {
    let (snapshot, mut rx) = hub.subscribe();
    let terminal = snapshot.state == SessionState::Stopped;
    if socket.send(text(&SessionEvent::Snapshot(snapshot))).await.is_err() {
        return;
    }
    if !terminal {
        loop {
            tokio::select! {
                event = rx.recv() => match event {
                    Ok(event) => {
                        let last = matches!(&event, SessionEvent::State(c) if c.state == SessionState::Stopped);
                        if socket.send(text(&event)).await.is_err() {
                            return;
                        }
                        if last {
                            break;
                        }
                    }
                    Err(RecvError::Lagged(n)) => {
                        tracing::warn!(skipped = n, "subscriber lagged; closing so it can resubscribe");
                        break;
                    }
                    Err(RecvError::Closed) => break,
                },
                incoming = socket.recv() => match incoming {
                    None | Some(Err(_)) | Some(Ok(Message::Close(_))) => return,
                    Some(Ok(_)) => {}
                },
            }
        }
    }
    let _ = socket.send(Message::Close(None)).await;
}
