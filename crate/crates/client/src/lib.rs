//! Async client for the session service.

use std::time::Duration;

use futures::{Stream, StreamExt};
use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use tokio_tungstenite::tungstenite::Message;

use affect_core::api::{
    CreateSessionRequest, ErrorBody, ModelInfo, SessionResource, TrainJob, TrainRequest, VarianceReport,
};
use affect_core::realtime::{SessionEvent, SessionState};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),

    #[error("{status} {code}: {message}")]
    Api { status: u16, code: String, message: String },

    #[error("event stream: {0}")]
    Stream(String),

    #[error("malformed event: {0}")]
    Json(#[from] serde_json::Error),

    #[error("timed out waiting for {0}")]
    Timeout(String),
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            _ => None,
        }
    }

    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { code, .. } => Some(code),
            _ => None,
        }
    }
}

pub type Result<T, E = ClientError> = std::result::Result<T, E>;

#[derive(Debug, Clone)]
pub struct Client {
    http: reqwest::Client,
    base: String,
}

impl Client {
    /// `base_url` like `http://127.0.0.1:8080`.
    pub fn new(base_url: impl Into<String>) -> Self {
        Client {
            http: reqwest::Client::new(),
            base: base_url.into().trim_end_matches('/').to_string(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn call<B: Serialize, T: DeserializeOwned>(&self, method: Method, path: &str, body: Option<&B>) -> Result<T> {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await.unwrap_or_default();
        Err(match serde_json::from_str::<ErrorBody>(&text) {
            Ok(body) => ClientError::Api {
                status: status.as_u16(),
                code: body.error.code,
                message: body.error.message,
            },
            Err(_) => ClientError::Api {
                status: status.as_u16(),
                code: status.canonical_reason().unwrap_or("error").to_lowercase(),
                message: text,
            },
        })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        self.call::<(), T>(Method::GET, path, None).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: Option<&B>) -> Result<T> {
        self.call(Method::POST, path, body).await
    }

    pub async fn create_session(&self, req: &CreateSessionRequest) -> Result<SessionResource> {
        self.post("/api/sessions", Some(req)).await
    }

    pub async fn list_sessions(&self) -> Result<Vec<SessionResource>> {
        self.get("/api/sessions").await
    }

    pub async fn get_session(&self, id: &str) -> Result<SessionResource> {
        self.get(&format!("/api/sessions/{id}")).await
    }

    pub async fn start_session(&self, id: &str) -> Result<SessionResource> {
        self.post::<(), _>(&format!("/api/sessions/{id}/start"), None).await
    }

    pub async fn stop_session(&self, id: &str) -> Result<SessionResource> {
        self.post::<(), _>(&format!("/api/sessions/{id}/stop"), None).await
    }

    pub async fn variance_report(&self, id: &str) -> Result<VarianceReport> {
        self.get(&format!("/api/sessions/{id}/variance-report")).await
    }

    pub async fn list_models(&self) -> Result<Vec<ModelInfo>> {
        self.get("/api/models").await
    }

    pub async fn submit_train(&self, req: &TrainRequest) -> Result<TrainJob> {
        self.post("/api/train", Some(req)).await
    }

    pub async fn get_job(&self, id: &str) -> Result<TrainJob> {
        self.get(&format!("/api/jobs/{id}")).await
    }

    /// Polls until the job is DONE or FAILED.
    pub async fn wait_for_job(&self, id: &str, timeout: Duration) -> Result<TrainJob> {
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            let job = self.get_job(id).await?;
            if job.status.is_terminal() {
                return Ok(job);
            }
            if tokio::time::Instant::now() >= deadline {
                return Err(ClientError::Timeout(format!("job {id}")));
            }
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
    }

    fn events_url(&self, id: &str) -> String {
        let ws_base = if let Some(rest) = self.base.strip_prefix("https://") {
            format!("wss://{rest}")
        } else if let Some(rest) = self.base.strip_prefix("http://") {
            format!("ws://{rest}")
        } else {
            self.base.clone()
        };
        format!("{ws_base}/api/sessions/{id}/events")
    }

    /// Subscribes to a session: a `snapshot` first, then live events. Ends
    /// after the STOPPED state event or when the server closes.
    pub async fn events(&self, id: &str) -> Result<impl Stream<Item = Result<SessionEvent>> + Unpin + Send> {
        // Surface 404s as API errors before attempting the upgrade.
        self.get_session(id).await?;
        let (ws, _) = tokio_tungstenite::connect_async(self.events_url(id))
            .await
            .map_err(|e| ClientError::Stream(e.to_string()))?;
        Ok(ws.filter_map(|msg| async move {
            match msg {
                Ok(Message::Text(text)) => Some(serde_json::from_str::<SessionEvent>(&text).map_err(ClientError::from)),
                Ok(Message::Close(_)) | Ok(_) => None,
                Err(e) => Some(Err(ClientError::Stream(e.to_string()))),
            }
        })
        .boxed())
    }

    /// Collects every event of a session until its stream ends.
    pub async fn collect_events(&self, id: &str) -> Result<Vec<SessionEvent>> {
        let mut stream = self.events(id).await?;
        let mut out = Vec::new();
        while let Some(event) = stream.next().await {
            let event = event?;
            let done = is_stopped(&event);
            out.push(event);
            if done {
                break;
            }
        }
        Ok(out)
    }
}

/// A STOPPED state event, or a snapshot of a stopped session.
pub fn is_stopped(event: &SessionEvent) -> bool {
    match event {
        SessionEvent::State(c) => c.state == SessionState::Stopped,
        SessionEvent::Snapshot(s) => s.state == SessionState::Stopped,
        _ => false,
    }
}

pub fn is_not_found(e: &ClientError) -> bool {
    e.status() == Some(StatusCode::NOT_FOUND.as_u16())
}
