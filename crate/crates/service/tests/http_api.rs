use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use futures::StreamExt;

use affect_client::{is_stopped, Client};
use affect_core::acquisition::{synthetic_source, SyntheticProfile};
use affect_core::api::{CreateSessionRequest, JobStatus, SourceSpec, TrainRequest, VarianceSource};
use affect_core::dataset_io::save_dataset;
use affect_core::forest::TrainConfig;
use affect_core::realtime::{read_predictions, SessionEvent, SessionState};
use affect_core::{Dataset, EmotionLabel, SubjectInfo};
use affect_service::{ServiceConfig, spawn};

struct Server {
    client: Client,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    handle: Option<tokio::task::JoinHandle<std::io::Result<()>>>,
}

impl Server {
    async fn start(data_dir: &Path, speed: f64) -> Server {
        let config = ServiceConfig { data_dir: data_dir.to_path_buf(), speed, ..ServiceConfig::default() };
        let (addr, handle, stop) = spawn(SocketAddr::from(([127, 0, 0, 1], 0)), config).await.unwrap();
        Server { client: Client::new(format!("http://{addr}")), stop: Some(stop), handle: Some(handle) }
    }

    async fn shutdown(mut self) {
        let _ = self.stop.take().unwrap().send(());
        self.handle.take().unwrap().await.unwrap().unwrap();
    }
}

fn write_training_set(dir: &Path, per_class: u64) -> PathBuf {
    let profile = SyntheticProfile::default();
    let ds: Dataset = EmotionLabel::ALL
        .iter()
        .flat_map(|&l| synthetic_source(&profile, l, 40 + l.index() as u64).unwrap().with_limit(per_class))
        .collect();
    let path = dir.join("train.csv");
    save_dataset(&ds, &path).unwrap();
    path
}

async fn trained_model(client: &Client, dir: &Path) -> String {
    let dataset = write_training_set(dir, 100);
    let job = client
        .submit_train(&TrainRequest { dataset, config: TrainConfig { n_trees: 10, ..TrainConfig::default() } })
        .await
        .unwrap();
    let done = client.wait_for_job(&job.id, Duration::from_secs(60)).await.unwrap();
    assert_eq!(done.status, JobStatus::Done, "{done:?}");
    done.model_id.unwrap()
}

fn subject() -> SubjectInfo {
    SubjectInfo {
        code: "P01".into(),
        age: 24,
        gender: "F".into(),
        civil_status: "single".into(),
        education: "undergraduate".into(),
    }
}

fn synthetic_request(model_id: &str, label: EmotionLabel) -> CreateSessionRequest {
    CreateSessionRequest {
        subject: subject(),
        source: SourceSpec::Synthetic { profile: None, label, seed: 3 },
        model_id: model_id.to_string(),
        config: None,
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn training_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(dir.path(), f64::INFINITY).await;
    let c = &server.client;

    let dataset = write_training_set(dir.path(), 100);
    let job = c
        .submit_train(&TrainRequest { dataset, config: TrainConfig { n_trees: 10, ..TrainConfig::default() } })
        .await
        .unwrap();
    assert!(matches!(job.status, JobStatus::Pending | JobStatus::Running | JobStatus::Done));
    let done = c.wait_for_job(&job.id, Duration::from_secs(60)).await.unwrap();
    assert_eq!(done.status, JobStatus::Done);
    let model_id = done.model_id.unwrap();
    let models = c.list_models().await.unwrap();
    assert_eq!(models.len(), 1);
    assert_eq!(models[0].id, model_id);
    assert_eq!(models[0].n_trees, 10);
    assert!(models[0].has_variance);

    // Header-only dataset: the trainer rejects it and the job fails.
    let empty = dir.path().join("empty.csv");
    save_dataset(&Dataset::default(), &empty).unwrap();
    let bad = c.submit_train(&TrainRequest { dataset: empty, config: TrainConfig::default() }).await.unwrap();
    let failed = c.wait_for_job(&bad.id, Duration::from_secs(30)).await.unwrap();
    assert_eq!(failed.status, JobStatus::Failed);
    assert!(failed.error.unwrap().len() > 5);
    assert_eq!(c.get_job(&job.id).await.unwrap().status, JobStatus::Done);

    let err = c
        .submit_train(&TrainRequest { dataset: dir.path().join("missing.csv"), config: TrainConfig::default() })
        .await
        .unwrap_err();
    assert_eq!((err.status(), err.code()), (Some(400), Some("validation")));
    assert_eq!(c.get_job("nope").await.unwrap_err().status(), Some(404));
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn session_validation_and_state_machine() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(dir.path(), 50.0).await;
    let c = &server.client;
    let model_id = trained_model(c, dir.path()).await;

    let err = c.create_session(&synthetic_request("missing-model", EmotionLabel::Sad)).await.unwrap_err();
    assert_eq!((err.status(), err.code()), (Some(404), Some("not_found")));
    assert_eq!(std::fs::read_dir(dir.path().join("sessions")).unwrap().count(), 0);

    let mut replay = synthetic_request(&model_id, EmotionLabel::Sad);
    replay.source = SourceSpec::Replay { path: dir.path().join("nope.csv"), rate_hz: None };
    assert_eq!(c.create_session(&replay).await.unwrap_err().code(), Some("validation"));

    let a = c.create_session(&synthetic_request(&model_id, EmotionLabel::Sad)).await.unwrap();
    let b = c.create_session(&synthetic_request(&model_id, EmotionLabel::Happy)).await.unwrap();
    assert_ne!(a.id, b.id);
    assert_eq!(a.state, SessionState::Idle);
    assert_eq!(a.prediction_count, 0);
    assert_eq!(c.list_sessions().await.unwrap().len(), 2);

    let err = c.stop_session(&a.id).await.unwrap_err();
    assert_eq!(err.status(), Some(409));
    assert!(err.to_string().contains("IDLE"), "{err}");

    let started = c.start_session(&a.id).await.unwrap();
    assert_eq!(started.state, SessionState::Calibrating);
    let err = c.start_session(&a.id).await.unwrap_err();
    assert_eq!(err.code(), Some("conflict"));
    assert!(err.to_string().contains("CALIBRATING") || err.to_string().contains("RUNNING"), "{err}");

    let stopped = c.stop_session(&a.id).await.unwrap();
    assert_eq!(stopped.state, SessionState::Stopped);
    assert_eq!(c.stop_session(&a.id).await.unwrap_err().status(), Some(409));
    assert_eq!(c.get_session("nope").await.unwrap_err().status(), Some(404));
    assert!(c.events("nope").await.is_err());
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn stream_matches_persisted_log_and_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(dir.path(), 100.0).await;
    let c = server.client.clone();
    let model_id = trained_model(&c, dir.path()).await;
    let session = c.create_session(&synthetic_request(&model_id, EmotionLabel::Happy)).await.unwrap();

    let mut stream = c.events(&session.id).await.unwrap();
    match stream.next().await.unwrap().unwrap() {
        SessionEvent::Snapshot(s) => {
            assert_eq!(s.state, SessionState::Idle);
            assert!(s.predictions.is_empty());
        }
        other => panic!("expected snapshot, got {other:?}"),
    }
    c.start_session(&session.id).await.unwrap();

    let mut streamed = Vec::new();
    let mut states = Vec::new();
    let mut quality = 0;
    let mut stop_sent = false;
    while let Some(event) = stream.next().await {
        let event = event.unwrap();
        match &event {
            SessionEvent::Prediction(p) => streamed.push(*p),
            SessionEvent::State(s) => states.push(s.state),
            SessionEvent::Quality(_) => quality += 1,
            _ => {}
        }
        if is_stopped(&event) {
            break;
        }
        if streamed.len() == 3 && !stop_sent {
            stop_sent = true;
            let c2 = c.clone();
            let id = session.id.clone();
            tokio::spawn(async move { c2.stop_session(&id).await.unwrap() });
        }
    }
    assert_eq!(states, vec![SessionState::Calibrating, SessionState::Running, SessionState::Stopped]);
    assert!(streamed.len() >= 3);
    assert!(quality >= 15);
    let indices: Vec<usize> = streamed.iter().map(|p| p.window_index).collect();
    assert_eq!(indices, (1..=streamed.len()).collect::<Vec<_>>());

    let session_dir = dir.path().join("sessions").join(&session.id);
    let persisted = read_predictions(&session_dir.join("predictions.ndjson")).unwrap();
    assert_eq!(persisted, streamed);
    assert!(session_dir.join("frames.csv").is_file());
    assert!(session_dir.join("meta.json").is_file());

    let report = c.variance_report(&session.id).await.unwrap();
    assert_eq!(report.model_variance_source, VarianceSource::Training);
    assert!(report.comparison.session.rows.contains_key(&EmotionLabel::Happy));

    server.shutdown().await;
    let server = Server::start(dir.path(), 100.0).await;
    let listed = server.client.list_sessions().await.unwrap();
    assert_eq!(listed.len(), 1);
    assert_eq!(listed[0].id, session.id);
    assert_eq!(listed[0].state, SessionState::Stopped);
    assert_eq!(listed[0].prediction_count, streamed.len());
    let events = server.client.collect_events(&session.id).await.unwrap();
    assert_eq!(events.len(), 1);
    match &events[0] {
        SessionEvent::Snapshot(s) => assert_eq!(s.predictions, streamed),
        other => panic!("expected snapshot, got {other:?}"),
    }
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn late_subscriber_sees_all_27_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(dir.path(), f64::INFINITY).await;
    let c = &server.client;
    let model_id = trained_model(c, dir.path()).await;
    let session = c.create_session(&synthetic_request(&model_id, EmotionLabel::Relaxed)).await.unwrap();
    c.start_session(&session.id).await.unwrap();

    let deadline = tokio::time::Instant::now() + Duration::from_secs(90);
    loop {
        let s = c.get_session(&session.id).await.unwrap();
        if s.state == SessionState::Stopped {
            assert_eq!(s.prediction_count, 27);
            assert!(s.failure.is_none());
            break;
        }
        assert!(tokio::time::Instant::now() < deadline, "session did not finish");
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    let events = c.collect_events(&session.id).await.unwrap();
    assert_eq!(events.len(), 1);
    let SessionEvent::Snapshot(snap) = &events[0] else { panic!("expected snapshot") };
    assert_eq!(snap.state, SessionState::Stopped);
    assert_eq!(snap.predictions.len(), 27);
    assert!(snap.quality.is_some());
    let ends: Vec<f64> = snap.predictions.iter().map(|p| p.t_end_s).collect();
    assert_eq!(ends.first(), Some(&40.0));
    assert_eq!(ends.last(), Some(&300.0));
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn malformed_bodies_use_the_error_shape() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(dir.path(), 1.0).await;
    let url = format!("{}/api/sessions", server.client.base_url());
    let resp = reqwest_post_raw(&url, "{not json").await;
    assert_eq!(resp.0, 400);
    let body: serde_json::Value = serde_json::from_str(&resp.1).unwrap();
    assert_eq!(body["error"]["code"], "validation");
    server.shutdown().await;
}

/// Minimal raw HTTP/1.1 POST so malformed bodies reach the server unchanged.
async fn reqwest_post_raw(url: &str, body: &str) -> (u16, String) {
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    let rest = url.strip_prefix("http://").unwrap();
    let (host, path) = rest.split_at(rest.find('/').unwrap());
    let mut stream = tokio::net::TcpStream::connect(host).await.unwrap();
    let req = format!(
        "POST {path} HTTP/1.1\r\nHost: {host}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(req.as_bytes()).await.unwrap();
    let mut raw = String::new();
    stream.read_to_string(&mut raw).await.unwrap();
    let status = raw[9..12].parse().unwrap();
    let body = raw.split("\r\n\r\n").nth(1).unwrap_or_default().to_string();
    (status, body)
}
