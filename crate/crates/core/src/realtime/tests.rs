use std::sync::atomic::AtomicBool;

use super::*;
use crate::acquisition::{replay_source, synthetic_source, ContactQuality, SyntheticProfile};
use crate::forest::{train, TrainConfig};
use crate::signal::Dataset;

fn small_forest() -> Forest {
    let profile = SyntheticProfile::default();
    let ds: Dataset = EmotionLabel::ALL
        .iter()
        .flat_map(|&l| synthetic_source(&profile, l, l.index() as u64).unwrap().with_limit(100))
        .collect();
    train(&ds, &TrainConfig { n_trees: 5, ..TrainConfig::default() }).unwrap()
}

fn run(
    source: &mut dyn FrameSource,
    cfg: &SessionConfig,
    stop: bool,
) -> (Result<SessionLog>, Vec<SessionEvent>) {
    let forest = small_forest();
    let mut events = Vec::new();
    let flag = AtomicBool::new(stop);
    let result = run_session(source, &forest, cfg, &mut |e| events.push(e), &flag);
    (result, events)
}

fn happy_stream() -> crate::acquisition::SyntheticSource {
    synthetic_source(&SyntheticProfile::default(), EmotionLabel::Happy, 11).unwrap()
}

#[test]
fn default_session_emits_27_windows() {
    let (log, events) = run(&mut happy_stream(), &SessionConfig::default(), false);
    let log = log.unwrap();
    assert_eq!(log.predictions.len(), 27);
    let ends: Vec<f64> = log.predictions.iter().map(|p| p.t_end_s).collect();
    let expected: Vec<f64> = (4..=30).map(|k| k as f64 * 10.0).collect();
    assert_eq!(ends, expected);
    let indices: Vec<usize> = log.predictions.iter().map(|p| p.window_index).collect();
    assert_eq!(indices, (1..=27).collect::<Vec<_>>());
    assert!(log.predictions.iter().all(|p| p.sample_count == 330));
    assert_eq!(log.stop_reason, Some(StopReason::Completed));
    let states: Vec<(SessionState, f64)> = log.state_history.iter().map(|c| (c.state, c.t_s)).collect();
    assert_eq!(
        states,
        vec![
            (SessionState::Idle, 0.0),
            (SessionState::Calibrating, 0.0),
            (SessionState::Running, 30.0),
            (SessionState::Stopped, 300.0)
        ]
    );
    // Calibration frames never enter a window.
    assert_eq!(log.frames.len(), 9900);
    assert_eq!(log.baseline.as_ref().unwrap().frames, 990);
    assert_eq!(990 + 27 * 330, log.frames.len());

    let quality = events.iter().filter(|e| matches!(e, SessionEvent::Quality(_))).count();
    assert_eq!(quality, 150);
    let batches: Vec<&FrameBatch> = events
        .iter()
        .filter_map(|e| if let SessionEvent::Frames(b) = e { Some(b) } else { None })
        .collect();
    assert_eq!(batches.len(), 300);
    assert!(batches.iter().all(|b| b.frames.len() <= 8 && !b.frames.is_empty()));
}

#[test]
fn predictions_only_while_running() {
    let (log, events) = run(&mut happy_stream(), &SessionConfig::default(), false);
    let log = log.unwrap();
    let mut state = SessionState::Idle;
    let mut streamed = Vec::new();
    for e in &events {
        match e {
            SessionEvent::State(c) => {
                assert!(state.can_transition_to(c.state));
                state = c.state;
            }
            SessionEvent::Prediction(p) => {
                assert_eq!(state, SessionState::Running);
                streamed.push(*p);
            }
            SessionEvent::Snapshot(_) => panic!("engine emitted a snapshot"),
            _ => {}
        }
    }
    assert_eq!(state, SessionState::Stopped);
    assert!(matches!(events.last(), Some(SessionEvent::State(c)) if c.state == SessionState::Stopped));
    assert_eq!(streamed, log.predictions);
}

#[test]
fn logical_stop_at_95_keeps_six_windows() {
    let cfg = SessionConfig { stop_at_s: Some(95.0), ..SessionConfig::default() };
    let log = run(&mut happy_stream(), &cfg, false).0.unwrap();
    let ends: Vec<f64> = log.predictions.iter().map(|p| p.t_end_s).collect();
    assert_eq!(ends, vec![40.0, 50.0, 60.0, 70.0, 80.0, 90.0]);
    assert_eq!(log.state(), SessionState::Stopped);
    assert_eq!(log.stop_reason, Some(StopReason::Operator));
    assert_eq!(log.state_history.last().unwrap().t_s, 95.0);
}

#[test]
fn stop_flag_ends_without_predictions() {
    let (log, events) = run(&mut happy_stream(), &SessionConfig::default(), true);
    let log = log.unwrap();
    assert!(log.predictions.is_empty());
    assert_eq!(log.stop_reason, Some(StopReason::Operator));
    assert_eq!(events.len(), 2);
}

#[test]
fn exhaustion_on_the_last_frame_closes_the_window() {
    let log = run(&mut happy_stream().with_limit(9900), &SessionConfig::default(), false).0.unwrap();
    assert_eq!(log.predictions.len(), 27);
    assert_eq!(log.stop_reason, Some(StopReason::SourceEnded));
    let log = run(&mut happy_stream().with_limit(9899), &SessionConfig::default(), false).0.unwrap();
    assert_eq!(log.predictions.len(), 26);
}

#[test]
fn source_ending_in_calibration_fails() {
    let (result, events) = run(&mut happy_stream().with_limit(500), &SessionConfig::default(), false);
    match result {
        Err(Error::CalibrationIncomplete { frames, required_s, .. }) => {
            assert_eq!(frames, 500);
            assert_eq!(required_s, 30.0);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(events.last(), Some(SessionEvent::State(c)) if c.state == SessionState::Stopped));
}

#[test]
fn no_calibration_goes_straight_to_running() {
    let cfg = SessionConfig { calibration_s: 0.0, session_s: 20.0, ..SessionConfig::default() };
    let log = run(&mut happy_stream(), &cfg, false).0.unwrap();
    let states: Vec<SessionState> = log.state_history.iter().map(|c| c.state).collect();
    assert_eq!(states, vec![SessionState::Idle, SessionState::Running, SessionState::Stopped]);
    assert_eq!(log.predictions.len(), 2);
    assert!(log.baseline.is_none());
}

#[test]
fn gap_skips_a_window_and_blackens_quality() {
    let frames: Vec<SampleRecord> = happy_stream()
        .with_limit(2000)
        .filter_map(|f| (f.timestamp_ms < 40_000 || f.timestamp_ms >= 50_000).then_some(f))
        .collect();
    let mut src = replay_like(frames);
    let cfg = SessionConfig { session_s: 60.0, ..SessionConfig::default() };
    let (log, events) = run(&mut src, &cfg, false);
    let log = log.unwrap();
    assert_eq!(log.skipped_windows, vec![2]);
    let idx: Vec<usize> = log.predictions.iter().map(|p| p.window_index).collect();
    assert_eq!(idx, vec![1, 3]);
    let black_at_44 = events.iter().any(|e| {
        matches!(e, SessionEvent::Quality(q) if q.t_s == 44.0 && q.channels.0 == [ContactQuality::Black; CHANNEL_COUNT])
    });
    assert!(black_at_44);
}

/// Keeps the given timestamps, unlike replay.
struct FixedFrames(std::vec::IntoIter<SampleRecord>);

impl FrameSource for FixedFrames {
    fn next_frame(&mut self) -> Option<SampleRecord> {
        self.0.next()
    }
    fn nominal_rate_hz(&self) -> f64 {
        33.0
    }
}

fn replay_like(frames: Vec<SampleRecord>) -> FixedFrames {
    FixedFrames(frames.into_iter())
}

#[test]
fn non_increasing_timestamps_rejected() {
    let mut frames: Vec<SampleRecord> = happy_stream().with_limit(10).collect();
    frames[5].timestamp_ms = frames[4].timestamp_ms;
    assert!(run(&mut replay_like(frames), &SessionConfig::default(), false).0.is_err());
}

#[test]
fn replayed_session_is_deterministic() {
    let ds: Dataset = happy_stream().with_limit(3000).collect();
    let cfg = SessionConfig { session_s: 90.0, ..SessionConfig::default() };
    let a = run(&mut replay_source(ds.clone(), 33.0).unwrap(), &cfg, false);
    let b = run(&mut replay_source(ds, 33.0).unwrap(), &cfg, false);
    assert_eq!(a.1, b.1);
    assert_eq!(a.0.unwrap(), b.0.unwrap());
}

#[test]
fn window_vote_examples() {
    let v = WindowVote::from_counts([180, 100, 50]).unwrap();
    assert_eq!((v.label, v.sample_count), (EmotionLabel::Happy, 330));
    assert!((v.confidence - 180.0 / 330.0).abs() < 1e-12);
    let tie = WindowVote::from_counts([5, 5, 0]).unwrap();
    assert_eq!((tie.label, tie.confidence), (EmotionLabel::Happy, 0.5));
    let tie = WindowVote::from_counts([0, 4, 4]).unwrap();
    assert_eq!(tie.label, EmotionLabel::Relaxed);
    assert!(WindowVote::from_counts([0, 0, 0]).is_none());
}

#[test]
fn classify_window_unanimity_and_empty() {
    let forest = small_forest();
    let sad: Vec<ChannelValues> = vec![[4170.0; CHANNEL_COUNT]; 12];
    let label = forest.predict_label(&sad[0]);
    let vote = classify_window(&sad, &forest).unwrap();
    assert_eq!((vote.label, vote.confidence, vote.sample_count), (label, 1.0, 12));
    assert!(matches!(classify_window(&[], &forest), Err(Error::EmptyWindow(_))));
}

#[test]
fn config_validation_and_events_json() {
    assert!(SessionConfig { window_s: 0.0, ..SessionConfig::default() }.validate().is_err());
    assert!(SessionConfig { session_s: 30.0, ..SessionConfig::default() }.validate().is_err());
    assert!(SessionConfig { calibration_s: -1.0, ..SessionConfig::default() }.validate().is_err());
    assert_eq!(SessionConfig::default().expected_windows(), 27);
    let e = SessionEvent::Prediction(WindowPrediction {
        window_index: 9,
        t_end_s: 120.0,
        label: EmotionLabel::Sad,
        confidence: 0.5,
        sample_count: 330,
    });
    let json = serde_json::to_string(&e).unwrap();
    assert_eq!(json, r#"{"type":"prediction","window_index":9,"t_end_s":120.0,"label":"SAD","confidence":0.5,"sample_count":330}"#);
    assert_eq!(serde_json::from_str::<SessionEvent>(&json).unwrap(), e);
    let s = serde_json::to_string(&SessionEvent::State(StateChange { state: SessionState::Running, t_s: 30.0 })).unwrap();
    assert_eq!(s, r#"{"type":"state","state":"RUNNING","t_s":30.0}"#);
    assert_eq!(format_clock(180.0), "3:00");
    assert_eq!(format_clock(65.0), "1:05");
}
