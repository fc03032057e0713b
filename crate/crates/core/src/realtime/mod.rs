//! The live loop: calibrate, then classify fixed windows of frames by
//! per-sample forest votes until the session ends or the operator stops it.
//!
//! All timing is logical, derived from frame timestamps relative to the
//! first frame, so replayed and synthetic sessions are deterministic. Window
//! `k` (1-based) covers `[calibration + (k−1)·window, calibration + k·window)`
//! and is classified once a frame at or past its end arrives. A trailing
//! window cut short by a stop is discarded.

mod log;

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::acquisition::{contact_quality, FrameSource, QualityConfig, QualitySnapshot};
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::signal::{argmax_label, ChannelValues, EmotionLabel, SampleRecord, CHANNEL_COUNT};

pub use log::{
    compare_session_variance, read_json, read_predictions, write_json, write_predictions, BaselineStats, SessionLog,
    SessionMeta, VarianceComparison, FRAMES_FILE, META_FILE, PREDICTIONS_FILE,
};

fn default_calibration_s() -> f64 {
    30.0
}
fn default_window_s() -> f64 {
    10.0
}
fn default_session_s() -> f64 {
    300.0
}
fn default_rate_hz() -> f64 {
    33.0
}
fn default_chart_rate_hz() -> f64 {
    8.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    #[serde(default = "default_calibration_s")]
    pub calibration_s: f64,
    #[serde(default = "default_window_s")]
    pub window_s: f64,
    #[serde(default = "default_session_s")]
    pub session_s: f64,
    #[serde(default = "default_rate_hz")]
    pub rate_hz: f64,
    /// Operator stop at this logical time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_at_s: Option<f64>,
    #[serde(default)]
    pub quality: QualityConfig,
    /// Upper bound on frames per second forwarded to charting.
    #[serde(default = "default_chart_rate_hz")]
    pub chart_rate_hz: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            calibration_s: default_calibration_s(),
            window_s: default_window_s(),
            session_s: default_session_s(),
            rate_hz: default_rate_hz(),
            stop_at_s: None,
            quality: QualityConfig::default(),
            chart_rate_hz: default_chart_rate_hz(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.calibration_s, self.window_s, self.session_s, self.rate_hz, self.chart_rate_hz]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::argument("session timings must be finite"));
        }
        if self.calibration_s < 0.0 {
            return Err(Error::argument("calibration_s must be ≥ 0"));
        }
        if self.window_s <= 0.0 {
            return Err(Error::argument("window_s must be > 0"));
        }
        if self.session_s <= self.calibration_s {
            return Err(Error::argument("session_s must exceed calibration_s"));
        }
        if !(self.rate_hz > 0.0 && self.rate_hz <= 1000.0) {
            return Err(Error::argument("rate_hz must lie in (0, 1000]"));
        }
        if self.chart_rate_hz <= 0.0 || self.quality.window_s <= 0.0 {
            return Err(Error::argument("chart and quality intervals must be positive"));
        }
        if self.stop_at_s.is_some_and(|s| !(s >= 0.0)) {
            return Err(Error::argument("stop_at_s must be ≥ 0"));
        }
        Ok(())
    }

    /// Complete windows in an uninterrupted session.
    pub fn expected_windows(&self) -> usize {
        ((self.session_s - self.calibration_s) / self.window_s + 1e-9).floor() as usize
    }

    /// Logical end of window `k` (1-based), in seconds.
    pub fn window_end_s(&self, k: usize) -> f64 {
        self.calibration_s + k as f64 * self.window_s
    }
}

fn to_ms(s: f64) -> u64 {
    (s * 1000.0).round() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SessionState {
    Idle,
    Calibrating,
    Running,
    Stopped,
}

impl SessionState {
    /// Forward moves only: IDLE → CALIBRATING → RUNNING → STOPPED, IDLE →
    /// RUNNING when there is no calibration, and any live state → STOPPED.
    pub fn can_transition_to(self, next: SessionState) -> bool {
        use SessionState::*;
        matches!(
            (self, next),
            (Idle, Calibrating) | (Idle, Running) | (Calibrating, Running) | (Idle | Calibrating | Running, Stopped)
        )
    }

    pub fn is_live(self) -> bool {
        matches!(self, SessionState::Calibrating | SessionState::Running)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SessionState::Idle => "IDLE",
            SessionState::Calibrating => "CALIBRATING",
            SessionState::Running => "RUNNING",
            SessionState::Stopped => "STOPPED",
        }
    }
}

impl std::fmt::Display for SessionState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateChange {
    pub state: SessionState,
    /// Logical time of the transition.
    pub t_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Reached the configured session length.
    Completed,
    Operator,
    SourceEnded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPrediction {
    pub window_index: usize,
    pub t_end_s: f64,
    pub label: EmotionLabel,
    /// Fraction of the window's samples voting for `label`.
    pub confidence: f64,
    pub sample_count: usize,
}

/// Majority vote over a window's per-sample predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowVote {
    pub label: EmotionLabel,
    pub confidence: f64,
    pub sample_count: usize,
    pub counts: [u64; EmotionLabel::COUNT],
}

impl WindowVote {
    /// `None` when no samples were counted.
    pub fn from_counts(counts: [u64; EmotionLabel::COUNT]) -> Option<WindowVote> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return None;
        }
        let label = argmax_label(&counts);
        Some(WindowVote {
            label,
            confidence: counts[label.index()] as f64 / total as f64,
            sample_count: total as usize,
            counts,
        })
    }
}

pub fn classify_window(samples: &[ChannelValues], forest: &Forest) -> Result<WindowVote> {
    let mut counts = [0u64; EmotionLabel::COUNT];
    for values in samples {
        counts[forest.predict_label(values).index()] += 1;
    }
    WindowVote::from_counts(counts).ok_or(Error::EmptyWindow(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityEvent {
    /// End of the assessed interval.
    pub t_s: f64,
    pub channels: QualitySnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePoint {
    pub timestamp_ms: u64,
    pub values: ChannelValues,
}

/// Downsampled frames for charting, one batch per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameBatch {
    /// Start of the covered second.
    pub t_s: f64,
    pub frames: Vec<FramePoint>,
}

/// What a late subscriber needs to rebuild the current view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub state: SessionState,
    pub quality: Option<QualitySnapshot>,
    pub predictions: Vec<WindowPrediction>,
}

/// Stream messages, discriminated by `type`. The engine never emits
/// `snapshot`; subscribers receive one first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SessionEvent {
    Snapshot(SessionSnapshot),
    State(StateChange),
    Quality(QualityEvent),
    Prediction(WindowPrediction),
    Frames(FrameBatch),
}

pub trait EventSink {
    fn emit(&mut self, event: SessionEvent);
}

impl<F: FnMut(SessionEvent)> EventSink for F {
    fn emit(&mut self, event: SessionEvent) {
        self(event)
    }
}

struct Engine<'a, S: EventSink + ?Sized> {
    forest: &'a Forest,
    cfg: &'a SessionConfig,
    sink: &'a mut S,
    log: SessionLog,
    state: SessionState,
    calibration_ms: u64,
    calibration_frames: Vec<ChannelValues>,
    window: Vec<ChannelValues>,
    next_window: usize,
    recent: VecDeque<(u64, ChannelValues)>,
    next_quality_ms: u64,
    quality_ms: u64,
    expected_quality_frames: usize,
    chart: Vec<FramePoint>,
    next_chart_ms: u64,
    chart_stride: usize,
    chart_seen: usize,
}

impl<'a, S: EventSink + ?Sized> Engine<'a, S> {
    fn transition(&mut self, state: SessionState, t_s: f64) {
        debug_assert!(self.state.can_transition_to(state), "{} → {state}", self.state);
        self.state = state;
        let change = StateChange { state, t_s };
        self.log.state_history.push(change);
        self.sink.emit(SessionEvent::State(change));
    }

    fn window_end_ms(&self, k: usize) -> u64 {
        to_ms(self.cfg.window_end_s(k))
    }

    /// Closes windows, quality intervals and chart seconds ending at or
    /// before `t_ms`.
    fn advance(&mut self, t_ms: u64) {
        while self.next_chart_ms <= t_ms {
            self.flush_chart(self.next_chart_ms - 1000);
            self.next_chart_ms += 1000;
        }
        while self.next_quality_ms <= t_ms {
            let from = self.next_quality_ms.saturating_sub(self.quality_ms);
            while self.recent.front().is_some_and(|(t, _)| *t < from) {
                self.recent.pop_front();
            }
            let frames: Vec<ChannelValues> =
                self.recent.iter().take_while(|(t, _)| *t < self.next_quality_ms).map(|(_, v)| *v).collect();
            let channels = contact_quality(&frames, self.expected_quality_frames, &self.cfg.quality);
            self.sink.emit(SessionEvent::Quality(QualityEvent {
                t_s: self.next_quality_ms as f64 / 1000.0,
                channels,
            }));
            self.next_quality_ms += self.quality_ms;
        }
        if self.state == SessionState::Calibrating && t_ms >= self.calibration_ms {
            self.finish_calibration();
            self.transition(SessionState::Running, self.cfg.calibration_s);
        }
        while self.state == SessionState::Running && self.window_end_ms(self.next_window) <= t_ms {
            self.close_window();
        }
    }

    fn finish_calibration(&mut self) {
        self.log.baseline = BaselineStats::from_frames(&self.calibration_frames);
        self.calibration_frames = Vec::new();
    }

    fn close_window(&mut self) {
        let k = self.next_window;
        self.next_window += 1;
        match classify_window(&self.window, self.forest) {
            Ok(vote) => {
                let prediction = WindowPrediction {
                    window_index: k,
                    t_end_s: self.cfg.window_end_s(k),
                    label: vote.label,
                    confidence: vote.confidence,
                    sample_count: vote.sample_count,
                };
                self.log.predictions.push(prediction);
                self.sink.emit(SessionEvent::Prediction(prediction));
            }
            Err(_) => self.log.skipped_windows.push(k),
        }
        self.window.clear();
    }

    fn flush_chart(&mut self, start_ms: u64) {
        if !self.chart.is_empty() {
            let frames = std::mem::take(&mut self.chart);
            self.sink.emit(SessionEvent::Frames(FrameBatch {
                t_s: start_ms as f64 / 1000.0,
                frames,
            }));
        }
        self.chart_seen = 0;
    }

    fn push(&mut self, rel_ms: u64, frame: SampleRecord) {
        if self.state == SessionState::Calibrating {
            self.calibration_frames.push(frame.values);
        } else {
            self.window.push(frame.values);
        }
        self.recent.push_back((rel_ms, frame.values));
        if self.chart_seen % self.chart_stride == 0 {
            self.chart.push(FramePoint {
                timestamp_ms: frame.timestamp_ms,
                values: frame.values,
            });
        }
        self.chart_seen += 1;
        self.log.frames.push(frame);
    }

    fn stop(mut self, reason: StopReason, t_s: f64) -> SessionLog {
        self.flush_chart(self.next_chart_ms.saturating_sub(1000));
        self.log.stop_reason = Some(reason);
        self.transition(SessionState::Stopped, t_s);
        self.log
    }
}

/// Runs one session to completion, operator stop (`stop` flag or
/// `cfg.stop_at_s`), or source exhaustion, emitting events in order.
pub fn run_session<S: EventSink + ?Sized>(
    source: &mut dyn FrameSource,
    forest: &Forest,
    cfg: &SessionConfig,
    sink: &mut S,
    stop: &AtomicBool,
) -> Result<SessionLog> {
    cfg.validate()?;
    let quality_ms = to_ms(cfg.quality.window_s).max(1);
    let mut engine = Engine {
        forest,
        cfg,
        sink,
        log: SessionLog::new(cfg.clone()),
        state: SessionState::Idle,
        calibration_ms: to_ms(cfg.calibration_s),
        calibration_frames: Vec::new(),
        window: Vec::new(),
        next_window: 1,
        recent: VecDeque::new(),
        next_quality_ms: quality_ms,
        quality_ms,
        expected_quality_frames: (cfg.quality.window_s * cfg.rate_hz).round() as usize,
        chart: Vec::new(),
        next_chart_ms: 1000,
        chart_stride: (cfg.rate_hz / cfg.chart_rate_hz).ceil().max(1.0) as usize,
        chart_seen: 0,
    };
    engine.log.state_history.push(StateChange { state: SessionState::Idle, t_s: 0.0 });
    if cfg.calibration_s > 0.0 {
        engine.transition(SessionState::Calibrating, 0.0);
    } else {
        engine.transition(SessionState::Running, 0.0);
    }

    let session_ms = to_ms(cfg.session_s);
    let stop_ms = cfg.stop_at_s.map(to_ms);
    let cut_ms = stop_ms.map_or(session_ms, |s| s.min(session_ms));
    let cut_reason = if stop_ms.is_some_and(|s| s < session_ms) {
        StopReason::Operator
    } else {
        StopReason::Completed
    };
    let period_ms = 1000.0 / cfg.rate_hz;
    let mut t0: Option<u64> = None;
    let mut last_ms = 0u64;

    loop {
        if stop.load(Ordering::SeqCst) {
            return Ok(engine.stop(StopReason::Operator, last_ms as f64 / 1000.0));
        }
        let Some(frame) = source.next_frame() else { break };
        frame.validate()?;
        let origin = *t0.get_or_insert(frame.timestamp_ms);
        let rel_ms = frame.timestamp_ms.checked_sub(origin).ok_or_else(|| {
            Error::argument(format!("frame timestamp {} precedes session start", frame.timestamp_ms))
        })?;
        if !engine.log.frames.is_empty() && rel_ms <= last_ms {
            return Err(Error::argument(format!("frame timestamps must increase (at {} ms)", frame.timestamp_ms)));
        }
        if rel_ms >= cut_ms {
            engine.advance(cut_ms);
            return Ok(engine.stop(cut_reason, cut_ms as f64 / 1000.0));
        }
        engine.advance(rel_ms);
        engine.push(rel_ms, frame);
        last_ms = rel_ms;
    }

    // Exhausted: the last frame stands for the interval up to the next one.
    let covered_ms = ((last_ms as f64 + period_ms).floor() as u64).min(cut_ms);
    if engine.state == SessionState::Calibrating && covered_ms < engine.calibration_ms {
        let frames = engine.calibration_frames.len();
        engine.stop(StopReason::SourceEnded, last_ms as f64 / 1000.0);
        return Err(Error::CalibrationIncomplete {
            frames,
            elapsed_s: covered_ms as f64 / 1000.0,
            required_s: cfg.calibration_s,
        });
    }
    engine.advance(covered_ms);
    Ok(engine.stop(StopReason::SourceEnded, covered_ms as f64 / 1000.0))
}

/// Formats seconds as `m:ss`.
pub fn format_clock(t_s: f64) -> String {
    let total = t_s.round() as u64;
    format!("{}:{:02}", total / 60, total % 60)
}

/// Baseline mean and sample variance per channel over calibration frames.
pub(crate) fn channel_moments(frames: &[ChannelValues]) -> (ChannelValues, ChannelValues) {
    let n = frames.len() as f64;
    let mut mean = [0.0; CHANNEL_COUNT];
    let mut variance = [0.0; CHANNEL_COUNT];
    if frames.is_empty() {
        return (mean, variance);
    }
    for c in 0..CHANNEL_COUNT {
        mean[c] = frames.iter().map(|f| f[c]).sum::<f64>() / n;
        if frames.len() > 1 {
            variance[c] = frames.iter().map(|f| (f[c] - mean[c]).powi(2)).sum::<f64>() / (n - 1.0);
        }
    }
    (mean, variance)
}

#[cfg(test)]
mod tests;
