use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use tokio::sync::watch;

use affect_core::acquisition::{buffered, replay_source, synthetic_source, FrameSource, SyntheticProfile};
use affect_core::api::{
    CreateSessionRequest, JobStatus, ModelInfo, SessionResource, SourceSpec, TrainJob, TrainRequest, VarianceReport,
    VarianceSource,
};
use affect_core::dataset_io::load_dataset;
use affect_core::evaluation::variance_table;
use affect_core::forest::{train, Forest};
use affect_core::realtime::{
    compare_session_variance, run_session, SessionEvent, SessionLog, SessionMeta, SessionState, StateChange,
    StopReason,
};

use crate::error::{ApiError, ApiResult};
use crate::hub::Hub;
use crate::paced::PacedSource;
use crate::store::{Store, StoredSession};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Playback speed of session sources relative to real time.
    pub speed: f64,
    /// Frames buffered between a source and its engine.
    pub frame_buffer: usize,
    pub event_capacity: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            data_dir: PathBuf::from("./data"),
            speed: 1.0,
            frame_buffer: 256,
            event_capacity: 1024,
        }
    }
}

pub(crate) struct SessionEntry {
    pub resource: Mutex<SessionResource>,
    pub hub: Arc<Hub>,
    stop: Arc<AtomicBool>,
    /// Flips to true once a started session has been persisted as stopped.
    finished: watch::Sender<bool>,
    /// Serializes start and stop.
    transition: tokio::sync::Mutex<()>,
}

impl SessionEntry {
    fn new(resource: SessionResource, hub: Hub) -> Self {
        let done = resource.state == SessionState::Stopped;
        SessionEntry {
            resource: Mutex::new(resource),
            hub: Arc::new(hub),
            stop: Arc::new(AtomicBool::new(false)),
            finished: watch::channel(done).0,
            transition: tokio::sync::Mutex::new(()),
        }
    }

    pub fn view(&self) -> SessionResource {
        let mut r = self.resource.lock().expect("resource lock").clone();
        r.state = self.hub.state();
        r.prediction_count = self.hub.prediction_count();
        r
    }
}

struct Inner {
    config: ServiceConfig,
    store: Store,
    sessions: RwLock<HashMap<String, Arc<SessionEntry>>>,
    jobs: Mutex<HashMap<String, TrainJob>>,
    models: Mutex<HashMap<String, Arc<Forest>>>,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true)
}

fn new_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

impl AppState {
    /// Opens the data directory and reloads persisted sessions. Sessions
    /// left live by an earlier process are marked STOPPED.
    pub fn open(config: ServiceConfig) -> affect_core::Result<Self> {
        if !(config.speed > 0.0) {
            return Err(affect_core::Error::Argument(format!("speed {} must be positive", config.speed)));
        }
        let store = Store::open(&config.data_dir)?;
        let mut sessions = HashMap::new();
        for mut stored in store.load_sessions()? {
            if stored.log.state().is_live() {
                let t_s = stored.log.state_history.last().map_or(0.0, |c| c.t_s);
                stored.log.state_history.push(StateChange { state: SessionState::Stopped, t_s });
                stored.session.state = SessionState::Stopped;
                stored.session.failure = Some("service restarted during the session".into());
                store.save_meta(&stored)?;
            }
            let predictions = affect_core::realtime::read_predictions(&store.predictions_path(&stored.session.id))?;
            let hub = Hub::new(stored.log.state(), predictions, config.event_capacity);
            let id = stored.session.id.clone();
            sessions.insert(id, Arc::new(SessionEntry::new(stored.session, hub)));
        }
        tracing::info!(sessions = sessions.len(), dir = %config.data_dir.display(), "data directory opened");
        Ok(AppState {
            inner: Arc::new(Inner {
                config,
                store,
                sessions: RwLock::new(sessions),
                jobs: Mutex::new(HashMap::new()),
                models: Mutex::new(HashMap::new()),
            }),
        })
    }

    pub fn store(&self) -> &Store {
        &self.inner.store
    }

    pub(crate) fn session(&self, id: &str) -> ApiResult<Arc<SessionEntry>> {
        self.inner
            .sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id}")))
    }

    pub fn list_sessions(&self) -> Vec<SessionResource> {
        let mut out: Vec<SessionResource> =
            self.inner.sessions.read().expect("sessions lock").values().map(|e| e.view()).collect();
        out.sort_by(|a, b| (&a.created_at, &a.id).cmp(&(&b.created_at, &b.id)));
        out
    }

    pub fn get_session(&self, id: &str) -> ApiResult<SessionResource> {
        Ok(self.session(id)?.view())
    }

    pub fn model(&self, id: &str) -> ApiResult<Arc<Forest>> {
        if let Some(f) = self.inner.models.lock().expect("models lock").get(id) {
            return Ok(f.clone());
        }
        let path = self.inner.store.model_path(id);
        if id.is_empty() || id.contains(['/', '\\']) || !path.is_file() {
            return Err(ApiError::not_found(format!("no model {id}")));
        }
        let forest = Arc::new(Forest::load(&path)?);
        self.inner.models.lock().expect("models lock").insert(id.to_string(), forest.clone());
        Ok(forest)
    }

    pub fn list_models(&self) -> ApiResult<Vec<ModelInfo>> {
        self.inner
            .store
            .model_ids()?
            .into_iter()
            .map(|id| {
                let forest = self.model(&id)?;
                Ok(ModelInfo {
                    has_variance: self.inner.store.variance_path(&id).is_file(),
                    n_trees: forest.trees.len(),
                    labels: forest.labels.clone(),
                    config: forest.config.clone(),
                    id,
                })
            })
            .collect()
    }

    /// Stores a forest under a fresh id.
    pub fn add_model(&self, forest: Forest, variance: Option<&affect_core::evaluation::VarianceTable>) -> ApiResult<String> {
        let id = new_id();
        self.inner.store.save_model(&id, &forest, variance)?;
        self.inner.models.lock().expect("models lock").insert(id.clone(), Arc::new(forest));
        Ok(id)
    }

    pub fn create_session(&self, req: CreateSessionRequest) -> ApiResult<SessionResource> {
        req.subject.validate()?;
        let config = req.config.unwrap_or_default();
        config.validate()?;
        self.model(&req.model_id)?;
        match &req.source {
            SourceSpec::Replay { path, rate_hz } => {
                std::fs::File::open(path)
                    .map_err(|e| ApiError::validation(format!("replay path {}: {e}", path.display())))?;
                if let Some(r) = rate_hz {
                    if !(*r > 0.0 && *r <= 1000.0) {
                        return Err(ApiError::validation(format!("replay rate {r} Hz must lie in (0, 1000]")));
                    }
                }
            }
            SourceSpec::Synthetic { profile, label, .. } => {
                let p = profile.clone().unwrap_or_default();
                p.validate()?;
                p.class(*label)?;
            }
        }
        let resource = SessionResource {
            id: new_id(),
            subject: req.subject,
            source: req.source,
            model_id: req.model_id,
            state: SessionState::Idle,
            created_at: now_rfc3339(),
            config,
            prediction_count: 0,
            failure: None,
        };
        self.inner.store.save_meta(&StoredSession {
            session: resource.clone(),
            log: SessionMeta::idle(resource.config.clone(), Some(resource.subject.clone())),
        })?;
        let hub = Hub::new(SessionState::Idle, Vec::new(), self.inner.config.event_capacity);
        self.inner
            .sessions
            .write()
            .expect("sessions lock")
            .insert(resource.id.clone(), Arc::new(SessionEntry::new(resource.clone(), hub)));
        tracing::info!(id = %resource.id, "session created");
        Ok(resource)
    }

    fn open_source(&self, resource: &SessionResource) -> ApiResult<Box<dyn FrameSource>> {
        let rate = resource.config.rate_hz;
        Ok(match &resource.source {
            SourceSpec::Replay { path, rate_hz } => {
                let ds = load_dataset(path)?;
                Box::new(replay_source(ds, rate_hz.unwrap_or(rate))?)
            }
            SourceSpec::Synthetic { profile, label, seed } => {
                let mut p = profile.clone().unwrap_or_default();
                p.rate_hz = rate;
                Box::new(synthetic_source(&p, *label, *seed)?.with_subject(resource.subject.code.clone()))
            }
        })
    }

    pub async fn start_session(&self, id: &str) -> ApiResult<SessionResource> {
        let entry = self.session(id)?;
        let _guard = entry.transition.lock().await;
        let state = entry.hub.state();
        if state != SessionState::Idle {
            return Err(ApiError::conflict(format!("session {id} is {state}; start requires IDLE")));
        }
        let resource = entry.view();
        let forest = self.model(&resource.model_id)?;
        let source = self.open_source(&resource)?;
        let speed = self.inner.config.speed;
        let capacity = self.inner.config.frame_buffer;

        let (tx, rx) = tokio::sync::oneshot::channel();
        let (first_tx, first_rx) = tokio::sync::oneshot::channel::<()>();
        let hub = entry.hub.clone();
        let stop = entry.stop.clone();
        let config = resource.config.clone();
        tokio::task::spawn_blocking(move || {
            let mut source = buffered(PacedSource::new(source, speed), capacity);
            let mut final_state = None;
            let mut first_tx = Some(first_tx);
            let result = run_session(
                &mut source,
                &forest,
                &config,
                &mut |event: SessionEvent| match event {
                    // Published once the log is on disk.
                    SessionEvent::State(c) if c.state == SessionState::Stopped => final_state = Some(c),
                    other => {
                        let is_state = matches!(other, SessionEvent::State(_));
                        hub.publish(other);
                        if is_state {
                            if let Some(tx) = first_tx.take() {
                                let _ = tx.send(());
                            }
                        }
                    }
                },
                &stop,
            );
            let _ = tx.send((result, final_state));
        });
        // The response reflects the engine's first transition.
        let _ = first_rx.await;
        let started = entry.view();
        if started.state.is_live() {
            let mut log = SessionMeta::idle(started.config.clone(), Some(started.subject.clone()));
            log.state_history.push(StateChange { state: started.state, t_s: 0.0 });
            if let Err(e) = self.inner.store.save_meta(&StoredSession { session: started, log }) {
                tracing::error!(id, error = %e, "persisting session start failed");
            }
        }

        let this = self.clone();
        let entry2 = entry.clone();
        tokio::spawn(async move {
            let (result, final_state) = rx.await.unwrap_or_else(|_| {
                (Err(affect_core::Error::Argument("session engine panicked".into())), None)
            });
            this.finish(&entry2, result, final_state).await;
        });
        Ok(entry.view())
    }

    async fn finish(
        &self,
        entry: &SessionEntry,
        result: affect_core::Result<SessionLog>,
        final_state: Option<StateChange>,
    ) {
        let mut resource = entry.view();
        let (log, stopped) = match result {
            Ok(mut log) => {
                log.subject = Some(resource.subject.clone());
                let stopped = final_state.unwrap_or(StateChange { state: SessionState::Stopped, t_s: 0.0 });
                (log, stopped)
            }
            Err(e) => {
                tracing::warn!(id = %resource.id, error = %e, "session failed");
                resource.failure = Some(e.to_string());
                let mut log = SessionLog::new(resource.config.clone());
                log.subject = Some(resource.subject.clone());
                log.state_history = vec![StateChange { state: SessionState::Idle, t_s: 0.0 }];
                log.predictions = entry.hub.snapshot().predictions;
                log.stop_reason = Some(StopReason::SourceEnded);
                let stopped = final_state.unwrap_or(StateChange { state: SessionState::Stopped, t_s: 0.0 });
                log.state_history.push(stopped);
                (log, stopped)
            }
        };
        resource.state = SessionState::Stopped;
        resource.prediction_count = log.predictions.len();
        let store = self.inner.store.clone();
        let saved = {
            let resource = resource.clone();
            tokio::task::spawn_blocking(move || store.save_finished(&resource, &log)).await
        };
        match saved {
            Ok(Ok(())) => {}
            Ok(Err(e)) => tracing::error!(id = %resource.id, error = %e, "persisting session failed"),
            Err(e) => tracing::error!(id = %resource.id, error = %e, "persisting session panicked"),
        }
        *entry.resource.lock().expect("resource lock") = resource;
        entry.hub.publish(SessionEvent::State(stopped));
        entry.finished.send_replace(true);
    }

    /// Stops a live session and returns once its log is persisted.
    pub async fn stop_session(&self, id: &str) -> ApiResult<SessionResource> {
        let entry = self.session(id)?;
        let _guard = entry.transition.lock().await;
        let state = entry.hub.state();
        if !state.is_live() {
            return Err(ApiError::conflict(format!(
                "session {id} is {state}; stop requires CALIBRATING or RUNNING"
            )));
        }
        entry.stop.store(true, Ordering::SeqCst);
        let mut finished = entry.finished.subscribe();
        let _ = finished.wait_for(|done| *done).await;
        Ok(entry.view())
    }

    /// Resolves once a session has been persisted as stopped.
    pub async fn wait_finished(&self, id: &str) -> ApiResult<SessionResource> {
        let entry = self.session(id)?;
        let mut finished = entry.finished.subscribe();
        let _ = finished.wait_for(|done| *done).await;
        Ok(entry.view())
    }

    pub fn submit_train_job(&self, req: TrainRequest) -> ApiResult<TrainJob> {
        std::fs::File::open(&req.dataset)
            .map_err(|e| ApiError::validation(format!("dataset {}: {e}", req.dataset.display())))?;
        req.config.validate()?;
        let job = TrainJob {
            id: new_id(),
            dataset: req.dataset,
            config: req.config,
            status: JobStatus::Pending,
            model_id: None,
            error: None,
            created_at: now_rfc3339(),
        };
        self.inner.jobs.lock().expect("jobs lock").insert(job.id.clone(), job.clone());
        let this = self.clone();
        let (id, dataset, config) = (job.id.clone(), job.dataset.clone(), job.config.clone());
        tokio::task::spawn_blocking(move || {
            this.update_job(&id, |j| j.status = JobStatus::Running);
            let outcome = (|| -> ApiResult<String> {
                let ds = load_dataset(&dataset)?;
                let forest = train(&ds, &config)?;
                let variance = variance_table(&ds).ok();
                this.add_model(forest, variance.as_ref())
            })();
            this.update_job(&id, |j| match outcome {
                Ok(model_id) => {
                    j.status = JobStatus::Done;
                    j.model_id = Some(model_id);
                }
                Err(e) => {
                    j.status = JobStatus::Failed;
                    j.error = Some(e.message);
                }
            });
        });
        Ok(job)
    }

    fn update_job(&self, id: &str, f: impl FnOnce(&mut TrainJob)) {
        let mut jobs = self.inner.jobs.lock().expect("jobs lock");
        if let Some(job) = jobs.get_mut(id) {
            let before = job.status;
            f(job);
            debug_assert!(before.can_advance_to(job.status), "{before:?} → {:?}", job.status);
        }
    }

    pub fn get_job(&self, id: &str) -> ApiResult<TrainJob> {
        self.inner
            .jobs
            .lock()
            .expect("jobs lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no job {id}")))
    }

    pub fn variance_report(&self, id: &str) -> ApiResult<VarianceReport> {
        let entry = self.session(id)?;
        let resource = entry.view();
        if resource.state != SessionState::Stopped || !*entry.finished.borrow() {
            return Err(ApiError::conflict(format!("session {id} is {}; the report needs a stopped session", resource.state)));
        }
        let frames = SessionLog::load(&self.inner.store.session_dir(id))?.frames;
        let (model, source) = match self.inner.store.load_variance(&resource.model_id)? {
            Some(table) => (table, VarianceSource::Training),
            None => (SyntheticProfile::default().variance_table(), VarianceSource::DefaultProfile),
        };
        let comparison = compare_session_variance(&frames, &model)?;
        Ok(VarianceReport {
            session_id: resource.id,
            model_id: resource.model_id,
            model_variance_source: source,
            comparison,
        })
    }
}
