//! Frame sources standing in for the headset, and per-channel contact quality.

mod quality;
mod synthetic;

use std::sync::mpsc::{sync_channel, Receiver};
use std::thread::JoinHandle;

use crate::error::{Error, Result};
use crate::signal::{Dataset, SampleRecord};

pub use quality::{contact_quality, ContactQuality, QualityConfig, QualitySnapshot};
pub use synthetic::{synthetic_source, ClassProfile, SyntheticProfile, SyntheticSource};

/// A stream of frames with strictly increasing timestamps. Consumed by a
/// single reader.
pub trait FrameSource: Send {
    /// `None` once the stream has ended.
    fn next_frame(&mut self) -> Option<SampleRecord>;
    fn nominal_rate_hz(&self) -> f64;
}

impl<S: FrameSource + ?Sized> FrameSource for Box<S> {
    fn next_frame(&mut self) -> Option<SampleRecord> {
        (**self).next_frame()
    }

    fn nominal_rate_hz(&self) -> f64 {
        (**self).nominal_rate_hz()
    }
}

pub(crate) fn check_rate(rate_hz: f64) -> Result<()> {
    // Above 1 kHz, millisecond timestamps would repeat.
    if !(rate_hz > 0.0 && rate_hz <= 1000.0) {
        return Err(Error::argument(format!("rate {rate_hz} Hz must lie in (0, 1000]")));
    }
    Ok(())
}

/// Timestamp of frame `k` at `rate_hz`: `round(k·1000/rate_hz)` ms.
pub fn frame_timestamp_ms(k: u64, rate_hz: f64) -> u64 {
    (k as f64 * 1000.0 / rate_hz).round() as u64
}

/// Replays a dataset in order with timestamps rewritten to `rate_hz`.
#[derive(Debug)]
pub struct ReplaySource {
    records: std::vec::IntoIter<SampleRecord>,
    rate_hz: f64,
    k: u64,
}

pub fn replay_source(ds: Dataset, rate_hz: f64) -> Result<ReplaySource> {
    check_rate(rate_hz)?;
    if ds.is_empty() {
        return Err(Error::argument("cannot replay an empty dataset"));
    }
    Ok(ReplaySource {
        records: ds.records.into_iter(),
        rate_hz,
        k: 0,
    })
}

impl FrameSource for ReplaySource {
    fn next_frame(&mut self) -> Option<SampleRecord> {
        let mut record = self.records.next()?;
        record.timestamp_ms = frame_timestamp_ms(self.k, self.rate_hz);
        self.k += 1;
        Some(record)
    }

    fn nominal_rate_hz(&self) -> f64 {
        self.rate_hz
    }
}

impl Iterator for ReplaySource {
    type Item = SampleRecord;

    fn next(&mut self) -> Option<SampleRecord> {
        self.next_frame()
    }
}

/// Runs a source on its own thread, handing frames over a bounded channel.
/// The producer blocks when `capacity` frames are waiting and exits once the
/// reader is dropped.
pub struct BufferedSource {
    rx: Receiver<SampleRecord>,
    rate_hz: f64,
    producer: Option<JoinHandle<()>>,
}

pub fn buffered<S: FrameSource + 'static>(mut source: S, capacity: usize) -> BufferedSource {
    let rate_hz = source.nominal_rate_hz();
    let (tx, rx) = sync_channel(capacity.max(1));
    let producer = std::thread::spawn(move || {
        while let Some(frame) = source.next_frame() {
            if tx.send(frame).is_err() {
                break;
            }
        }
    });
    BufferedSource {
        rx,
        rate_hz,
        producer: Some(producer),
    }
}

impl FrameSource for BufferedSource {
    fn next_frame(&mut self) -> Option<SampleRecord> {
        self.rx.recv().ok()
    }

    fn nominal_rate_hz(&self) -> f64 {
        self.rate_hz
    }
}

impl Drop for BufferedSource {
    fn drop(&mut self) {
        // Unblock a producer waiting on a full channel before joining it.
        let (_, dead) = sync_channel(0);
        drop(std::mem::replace(&mut self.rx, dead));
        if let Some(handle) = self.producer.take() {
            let _ = handle.join();
        }
    }
}
