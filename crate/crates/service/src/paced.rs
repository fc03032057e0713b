use std::time::{Duration, Instant};

use affect_core::acquisition::FrameSource;
use affect_core::SampleRecord;

/// Releases frames no earlier than their timestamp, scaled by `speed`
/// (2.0 plays twice as fast). An infinite speed disables pacing.
pub struct PacedSource<S> {
    inner: S,
    speed: f64,
    start: Option<(Instant, u64)>,
}

impl<S: FrameSource> PacedSource<S> {
    pub fn new(inner: S, speed: f64) -> Self {
        PacedSource { inner, speed, start: None }
    }
}

impl<S: FrameSource> FrameSource for PacedSource<S> {
    fn next_frame(&mut self) -> Option<SampleRecord> {
        let frame = self.inner.next_frame()?;
        if self.speed.is_finite() {
            let (t0, ts0) = *self.start.get_or_insert((Instant::now(), frame.timestamp_ms));
            let due = t0 + Duration::from_secs_f64(frame.timestamp_ms.saturating_sub(ts0) as f64 / 1000.0 / self.speed);
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        Some(frame)
    }

    fn nominal_rate_hz(&self) -> f64 {
        self.inner.nominal_rate_hz()
    }
}
