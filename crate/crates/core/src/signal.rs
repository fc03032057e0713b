//! Domain types shared by every stage of the pipeline: electrode channels,
//! emotion labels, sample records and datasets.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of electrode channels on the headset.
pub const CHANNEL_COUNT: usize = 14;

/// One row of channel amplitudes, indexed by [`ChannelId::index`].
pub type ChannelValues = [f64; CHANNEL_COUNT];

/// Electrode positions in the canonical column order of the dataset file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChannelId {
    AF3,
    F7,
    F3,
    FC5,
    T7,
    P7,
    O1,
    O2,
    P8,
    T8,
    FC6,
    F4,
    F8,
    AF4,
}

impl ChannelId {
    pub const ALL: [ChannelId; CHANNEL_COUNT] = [
        ChannelId::AF3,
        ChannelId::F7,
        ChannelId::F3,
        ChannelId::FC5,
        ChannelId::T7,
        ChannelId::P7,
        ChannelId::O1,
        ChannelId::O2,
        ChannelId::P8,
        ChannelId::T8,
        ChannelId::FC6,
        ChannelId::F4,
        ChannelId::F8,
        ChannelId::AF4,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<ChannelId> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelId::AF3 => "AF3",
            ChannelId::F7 => "F7",
            ChannelId::F3 => "F3",
            ChannelId::FC5 => "FC5",
            ChannelId::T7 => "T7",
            ChannelId::P7 => "P7",
            ChannelId::O1 => "O1",
            ChannelId::O2 => "O2",
            ChannelId::P8 => "P8",
            ChannelId::T8 => "T8",
            ChannelId::FC6 => "FC6",
            ChannelId::F4 => "F4",
            ChannelId::F8 => "F8",
            ChannelId::AF4 => "AF4",
        }
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ChannelId::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::argument(format!("unknown channel {s:?}")))
    }
}

/// The three induced emotional states. The derived ordering
/// (HAPPY < RELAXED < SAD) is the canonical tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EmotionLabel {
    Happy,
    Relaxed,
    Sad,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; 3] = [EmotionLabel::Happy, EmotionLabel::Relaxed, EmotionLabel::Sad];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<EmotionLabel> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EmotionLabel::Happy => "HAPPY",
            EmotionLabel::Relaxed => "RELAXED",
            EmotionLabel::Sad => "SAD",
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmotionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "HAPPY" => Ok(EmotionLabel::Happy),
            "RELAXED" => Ok(EmotionLabel::Relaxed),
            "SAD" => Ok(EmotionLabel::Sad),
            other => Err(Error::argument(format!("unknown emotion label {other:?}"))),
        }
    }
}

/// Per-label counts indexed by [`EmotionLabel::index`].
pub type LabelCounts = [u64; EmotionLabel::COUNT];

/// Index of the largest entry; ties go to the earliest label.
pub fn argmax_label<T: PartialOrd + Copy>(values: &[T; EmotionLabel::COUNT]) -> EmotionLabel {
    let mut best = 0;
    for i in 1..EmotionLabel::COUNT {
        if values[i] > values[best] {
            best = i;
        }
    }
    EmotionLabel::ALL[best]
}

/// One timestamped sample of all fourteen channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub subject_id: String,
    pub timestamp_ms: u64,
    pub label: Option<EmotionLabel>,
    pub values: ChannelValues,
}

impl SampleRecord {
    pub fn new(
        subject_id: impl Into<String>,
        timestamp_ms: u64,
        label: Option<EmotionLabel>,
        values: ChannelValues,
    ) -> Result<Self> {
        let record = SampleRecord {
            subject_id: subject_id.into(),
            timestamp_ms,
            label,
            values,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(ch) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::argument(format!(
                "channel {} has non-finite value {}",
                ChannelId::ALL[ch],
                self.values[ch]
            )));
        }
        Ok(())
    }

    pub fn value(&self, channel: ChannelId) -> f64 {
        self.values[channel.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectInfo {
    pub code: String,
    pub age: u32,
    pub gender: String,
    pub civil_status: String,
    pub education: String,
}

impl SubjectInfo {
    pub fn validate(&self) -> Result<()> {
        if self.code.trim().is_empty() {
            return Err(Error::argument("subject code must not be empty"));
        }
        if !(1..=130).contains(&self.age) {
            return Err(Error::argument(format!("subject age {} outside [1, 130]", self.age)));
        }
        Ok(())
    }
}

/// Ordered collection of records plus optional subject metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<SampleRecord>,
    pub subjects: BTreeMap<String, SubjectInfo>,
}

impl Dataset {
    pub fn new(records: Vec<SampleRecord>) -> Self {
        Dataset {
            records,
            subjects: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Counts of labeled records per class; unlabeled records are skipped.
    pub fn class_counts(&self) -> BTreeMap<EmotionLabel, usize> {
        let mut counts = BTreeMap::new();
        for label in self.records.iter().filter_map(|r| r.label) {
            *counts.entry(label).or_insert(0) += 1;
        }
        counts
    }

    /// Labels present in the dataset, in canonical order.
    pub fn labels(&self) -> Vec<EmotionLabel> {
        self.class_counts().into_keys().collect()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.records.iter().all(|r| r.label.is_some())
    }

    /// Fails unless the dataset is non-empty and every record carries a label.
    pub fn require_labeled(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::argument("dataset is empty"));
        }
        if let Some(i) = self.records.iter().position(|r| r.label.is_none()) {
            return Err(Error::argument(format!("record {i} has no label")));
        }
        Ok(())
    }

    /// Records whose label is one of `labels`, order preserved.
    pub fn filter_labels(&self, labels: &[EmotionLabel]) -> Dataset {
        Dataset {
            records: self
                .records
                .iter()
                .filter(|r| r.label.is_some_and(|l| labels.contains(&l)))
                .cloned()
                .collect(),
            subjects: self.subjects.clone(),
        }
    }

    pub(crate) fn with_records(&self, records: Vec<SampleRecord>) -> Dataset {
        Dataset {
            records,
            subjects: self.subjects.clone(),
        }
    }
}

impl FromIterator<SampleRecord> for Dataset {
    fn from_iter<I: IntoIterator<Item = SampleRecord>>(iter: I) -> Self {
        Dataset::new(iter.into_iter().collect())
    }
}

/// Serde adapter writing a per-channel array as a map keyed by channel name
/// in canonical order. Reading requires every channel exactly once.
pub mod channel_map {
    use std::fmt;
    use std::marker::PhantomData;

    use serde::de::{Error as _, MapAccess, Visitor};
    use serde::ser::SerializeMap;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::{ChannelId, CHANNEL_COUNT};

    pub fn serialize<T: Serialize, S: Serializer>(values: &[T; CHANNEL_COUNT], s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(CHANNEL_COUNT))?;
        for (ch, v) in ChannelId::ALL.iter().zip(values) {
            map.serialize_entry(ch.name(), v)?;
        }
        map.end()
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<[T; CHANNEL_COUNT], D::Error>
    where
        T: Deserialize<'de> + Copy + Default,
        D: Deserializer<'de>,
    {
        struct ChannelVisitor<T>(PhantomData<T>);

        impl<'de, T: Deserialize<'de> + Copy + Default> Visitor<'de> for ChannelVisitor<T> {
            type Value = [T; CHANNEL_COUNT];

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map with one entry per channel")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
                let mut out = [T::default(); CHANNEL_COUNT];
                let mut seen = [false; CHANNEL_COUNT];
                while let Some(key) = access.next_key::<String>()? {
                    let ch: ChannelId = key.parse().map_err(A::Error::custom)?;
                    if std::mem::replace(&mut seen[ch.index()], true) {
                        return Err(A::Error::custom(format!("duplicate channel {ch}")));
                    }
                    out[ch.index()] = access.next_value()?;
                }
                if let Some(missing) = seen.iter().position(|s| !s) {
                    return Err(A::Error::custom(format!("missing channel {}", ChannelId::ALL[missing])));
                }
                Ok(out)
            }
        }

        d.deserialize_map(ChannelVisitor(PhantomData))
    }
}
