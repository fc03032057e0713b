use std::collections::BTreeMap;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_rate, frame_timestamp_ms, FrameSource};
use crate::error::{Error, Result};
use crate::evaluation::VarianceTable;
use crate::rng::{seeded, PinnedRng};
use crate::signal::{channel_map, ChannelId, ChannelValues, EmotionLabel, SampleRecord, CHANNEL_COUNT};

const DEFAULT_PROFILE_JSON: &str = include_str!("../../data/default_profile.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    #[serde(with = "channel_map")]
    pub mean: ChannelValues,
    #[serde(with = "channel_map")]
    pub variance: ChannelValues,
}

/// Class-conditional Gaussian parameters per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProfile {
    pub baseline_offset: f64,
    pub rate_hz: f64,
    pub classes: BTreeMap<EmotionLabel, ClassProfile>,
}

impl Default for SyntheticProfile {
    /// Per-class training-data variances of the reference recordings, means
    /// at `4200 + {HAPPY: 300, RELAXED: 30, SAD: −30}`, 33 Hz.
    fn default() -> Self {
        serde_json::from_str(DEFAULT_PROFILE_JSON).expect("bundled profile parses")
    }
}

impl SyntheticProfile {
    /// Means `baseline_offset + offsets[label]` on every channel.
    pub fn from_variances(
        variances: &VarianceTable,
        baseline_offset: f64,
        offsets: &BTreeMap<EmotionLabel, f64>,
        rate_hz: f64,
    ) -> Result<Self> {
        let classes = variances
            .rows
            .iter()
            .map(|(&label, variance)| {
                let offset = offsets.get(&label).copied().unwrap_or(0.0);
                (
                    label,
                    ClassProfile {
                        mean: [baseline_offset + offset; CHANNEL_COUNT],
                        variance: *variance,
                    },
                )
            })
            .collect();
        let profile = SyntheticProfile { baseline_offset, rate_hz, classes };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        check_rate(self.rate_hz)?;
        for (label, class) in &self.classes {
            for ch in ChannelId::ALL {
                let (m, v) = (class.mean[ch.index()], class.variance[ch.index()]);
                if !m.is_finite() {
                    return Err(Error::argument(format!("{label} {ch}: mean {m} is not finite")));
                }
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::argument(format!("{label} {ch}: variance {v} must be non-negative")));
                }
            }
        }
        Ok(())
    }

    pub fn class(&self, label: EmotionLabel) -> Result<&ClassProfile> {
        self.classes
            .get(&label)
            .ok_or_else(|| Error::argument(format!("profile has no parameters for {label}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let profile: SyntheticProfile = serde_json::from_str(text)?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn variance_table(&self) -> VarianceTable {
        VarianceTable {
            rows: self.classes.iter().map(|(&l, c)| (l, c.variance)).collect(),
        }
    }
}

/// Independent per-channel Gaussian frames for one class.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    noise: [Normal<f64>; CHANNEL_COUNT],
    rng: PinnedRng,
    label: EmotionLabel,
    labeled: bool,
    subject_id: String,
    rate_hz: f64,
    k: u64,
    limit: Option<u64>,
}

pub fn synthetic_source(profile: &SyntheticProfile, label: EmotionLabel, seed: u64) -> Result<SyntheticSource> {
    profile.validate()?;
    let class = profile.class(label)?;
    let mut noise = [Normal::new(0.0, 0.0).expect("unit"); CHANNEL_COUNT];
    for (c, n) in noise.iter_mut().enumerate() {
        *n = Normal::new(class.mean[c], class.variance[c].sqrt())
            .map_err(|e| Error::argument(format!("{label} {}: {e}", ChannelId::ALL[c])))?;
    }
    Ok(SyntheticSource {
        noise,
        rng: seeded(seed),
        label,
        labeled: true,
        subject_id: "synthetic".into(),
        rate_hz: profile.rate_hz,
        k: 0,
        limit: None,
    })
}

impl SyntheticSource {
    /// Ends the stream after `frames` frames.
    pub fn with_limit(mut self, frames: u64) -> Self {
        self.limit = Some(frames);
        self
    }

    /// Emits frames without a label, as a live headset would.
    pub fn unlabeled(mut self) -> Self {
        self.labeled = false;
        self
    }

    pub fn with_subject(mut self, subject_id: impl Into<String>) -> Self {
        self.subject_id = subject_id.into();
        self
    }

    pub fn label(&self) -> EmotionLabel {
        self.label
    }
}

impl FrameSource for SyntheticSource {
    fn next_frame(&mut self) -> Option<SampleRecord> {
        if self.limit.is_some_and(|l| self.k >= l) {
            return None;
        }
        let mut values = [0.0; CHANNEL_COUNT];
        for (v, n) in values.iter_mut().zip(&self.noise) {
            *v = n.sample(&mut self.rng);
        }
        let frame = SampleRecord {
            subject_id: self.subject_id.clone(),
            timestamp_ms: frame_timestamp_ms(self.k, self.rate_hz),
            label: self.labeled.then_some(self.label),
            values,
        };
        self.k += 1;
        Some(frame)
    }

    fn nominal_rate_hz(&self) -> f64 {
        self.rate_hz
    }
}

impl Iterator for SyntheticSource {
    type Item = SampleRecord;

    fn next(&mut self) -> Option<SampleRecord> {
        self.next_frame()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::sample_variance;

    fn drain(s: SyntheticSource) -> Vec<SampleRecord> {
        s.collect()
    }

    #[test]
    fn default_profile_contents() {
        let p = SyntheticProfile::default();
        p.validate().unwrap();
        assert_eq!(p.rate_hz, 33.0);
        assert_eq!(p.baseline_offset, 4200.0);
        let happy = p.class(EmotionLabel::Happy).unwrap();
        assert_eq!(happy.variance[ChannelId::AF3.index()], 226269.0);
        assert_eq!(happy.variance[ChannelId::AF4.index()], 388021.0);
        assert_eq!(happy.mean, [4500.0; CHANNEL_COUNT]);
        assert_eq!(p.class(EmotionLabel::Relaxed).unwrap().variance[ChannelId::P8.index()], 65718.0);
        assert_eq!(p.class(EmotionLabel::Sad).unwrap().mean, [4170.0; CHANNEL_COUNT]);
        assert_eq!(SyntheticProfile::from_json(&p.to_json()).unwrap(), p);
    }

    #[test]
    fn zero_variance_emits_the_mean() {
        let mut p = SyntheticProfile::default();
        p.classes.get_mut(&EmotionLabel::Sad).unwrap().variance = [0.0; CHANNEL_COUNT];
        let frames = drain(synthetic_source(&p, EmotionLabel::Sad, 1).unwrap().with_limit(20));
        assert_eq!(frames.len(), 20);
        assert!(frames.iter().all(|f| f.values == [4170.0; CHANNEL_COUNT]));
    }

    #[test]
    fn negative_variance_rejected() {
        let mut p = SyntheticProfile::default();
        p.classes.get_mut(&EmotionLabel::Happy).unwrap().variance[3] = -1.0;
        assert!(synthetic_source(&p, EmotionLabel::Happy, 0).is_err());
        let mut p = SyntheticProfile::default();
        p.classes.remove(&EmotionLabel::Relaxed);
        assert!(synthetic_source(&p, EmotionLabel::Relaxed, 0).is_err());
    }

    #[test]
    fn variance_concentrates() {
        let frames = drain(
            synthetic_source(&SyntheticProfile::default(), EmotionLabel::Happy, 7)
                .unwrap()
                .with_limit(10_000),
        );
        let af3: Vec<f64> = frames.iter().map(|f| f.values[0]).collect();
        let v = sample_variance(&af3).unwrap();
        assert!((v / 226269.0 - 1.0).abs() < 0.10, "{v}");
    }

    #[test]
    fn deterministic_and_monotone() {
        let p = SyntheticProfile::default();
        let a = drain(synthetic_source(&p, EmotionLabel::Relaxed, 5).unwrap().with_limit(300));
        let b = drain(synthetic_source(&p, EmotionLabel::Relaxed, 5).unwrap().with_limit(300));
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0].timestamp_ms < w[1].timestamp_ms));
        assert!(a.iter().all(|f| f.label == Some(EmotionLabel::Relaxed)));
        let u = drain(synthetic_source(&p, EmotionLabel::Relaxed, 5).unwrap().unlabeled().with_limit(3));
        assert!(u.iter().all(|f| f.label.is_none()));
    }

    #[test]
    fn profile_json_requires_every_channel() {
        let mut v: serde_json::Value = serde_json::from_str(&SyntheticProfile::default().to_json()).unwrap();
        v["classes"]["SAD"]["variance"].as_object_mut().unwrap().remove("O1");
        let err = SyntheticProfile::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("missing channel O1"), "{err}");
    }
}
