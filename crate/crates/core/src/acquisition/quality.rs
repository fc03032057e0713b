use serde::{Deserialize, Serialize};

use crate::signal::{channel_map, ChannelValues, CHANNEL_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ContactQuality {
    /// No signal.
    #[default]
    Black,
    /// Too many dropped frames, or a flat line.
    Red,
    /// Variance outside the plausible band.
    Orange,
    Green,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityConfig {
    pub window_s: f64,
    /// Fraction of expected frames that may be missing before RED.
    pub max_missing_fraction: f64,
    pub flatline_threshold: f64,
    pub band_lo: f64,
    pub band_hi: f64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig {
            window_s: 2.0,
            max_missing_fraction: 0.2,
            flatline_threshold: 1e-6,
            band_lo: 1.0,
            band_hi: 1e7,
        }
    }
}

/// Contact colour per channel, serialized as `{channel: colour}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QualitySnapshot(#[serde(with = "channel_map")] pub [ContactQuality; CHANNEL_COUNT]);

impl QualitySnapshot {
    pub fn all_green(&self) -> bool {
        self.0.iter().all(|q| *q == ContactQuality::Green)
    }
}

/// Colours for the frames received during the last `cfg.window_s` seconds,
/// against `expected_frames` at the nominal rate.
pub fn contact_quality(recent: &[ChannelValues], expected_frames: usize, cfg: &QualityConfig) -> QualitySnapshot {
    if recent.is_empty() {
        return QualitySnapshot([ContactQuality::Black; CHANNEL_COUNT]);
    }
    let missing = expected_frames.saturating_sub(recent.len()) as f64;
    let dropping = missing > cfg.max_missing_fraction * expected_frames as f64;
    let n = recent.len() as f64;
    let mut out = [ContactQuality::Green; CHANNEL_COUNT];
    for (c, q) in out.iter_mut().enumerate() {
        let variance = if recent.len() < 2 {
            0.0
        } else {
            let mean = recent.iter().map(|f| f[c]).sum::<f64>() / n;
            recent.iter().map(|f| (f[c] - mean).powi(2)).sum::<f64>() / (n - 1.0)
        };
        *q = if dropping || variance < cfg.flatline_threshold {
            ContactQuality::Red
        } else if variance < cfg.band_lo || variance > cfg.band_hi {
            ContactQuality::Orange
        } else {
            ContactQuality::Green
        };
    }
    QualitySnapshot(out)
}
