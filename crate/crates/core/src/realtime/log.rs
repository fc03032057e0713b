use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{channel_moments, SessionConfig, SessionState, StateChange, StopReason, WindowPrediction};
use crate::dataset_io::{format_value, load_dataset, save_dataset};
use crate::error::{Error, Result};
use crate::evaluation::{variance_table, VarianceTable};
use crate::signal::{channel_map, ChannelId, ChannelValues, Dataset, SampleRecord, SubjectInfo, CHANNEL_COUNT};

pub const META_FILE: &str = "meta.json";
pub const FRAMES_FILE: &str = "frames.csv";
pub const PREDICTIONS_FILE: &str = "predictions.ndjson";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    pub frames: usize,
    #[serde(with = "channel_map")]
    pub mean: ChannelValues,
    #[serde(with = "channel_map")]
    pub variance: ChannelValues,
}

impl BaselineStats {
    pub fn from_frames(frames: &[ChannelValues]) -> Option<BaselineStats> {
        if frames.is_empty() {
            return None;
        }
        let (mean, variance) = channel_moments(frames);
        Some(BaselineStats { frames: frames.len(), mean, variance })
    }
}

/// Everything about a session except its frames and predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub config: SessionConfig,
    #[serde(default)]
    pub subject: Option<SubjectInfo>,
    pub state_history: Vec<StateChange>,
    #[serde(default)]
    pub baseline: Option<BaselineStats>,
    #[serde(default)]
    pub skipped_windows: Vec<usize>,
    #[serde(default)]
    pub stop_reason: Option<StopReason>,
    #[serde(default)]
    pub frame_count: usize,
}

impl SessionMeta {
    /// A session that has not started.
    pub fn idle(config: SessionConfig, subject: Option<SubjectInfo>) -> Self {
        SessionMeta {
            config,
            subject,
            state_history: vec![StateChange { state: SessionState::Idle, t_s: 0.0 }],
            baseline: None,
            skipped_windows: Vec::new(),
            stop_reason: None,
            frame_count: 0,
        }
    }

    pub fn state(&self) -> SessionState {
        self.state_history.last().map_or(SessionState::Idle, |c| c.state)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub config: SessionConfig,
    pub subject: Option<SubjectInfo>,
    pub state_history: Vec<StateChange>,
    /// Indices contiguous from 1 unless a window had no frames.
    pub predictions: Vec<WindowPrediction>,
    pub skipped_windows: Vec<usize>,
    pub baseline: Option<BaselineStats>,
    pub stop_reason: Option<StopReason>,
    /// Every consumed frame, calibration included.
    pub frames: Vec<SampleRecord>,
}

impl SessionLog {
    pub fn new(config: SessionConfig) -> Self {
        SessionLog {
            config,
            subject: None,
            state_history: Vec::new(),
            predictions: Vec::new(),
            skipped_windows: Vec::new(),
            baseline: None,
            stop_reason: None,
            frames: Vec::new(),
        }
    }

    pub fn state(&self) -> SessionState {
        self.state_history.last().map_or(SessionState::Idle, |c| c.state)
    }

    pub fn meta(&self) -> SessionMeta {
        SessionMeta {
            config: self.config.clone(),
            subject: self.subject.clone(),
            state_history: self.state_history.clone(),
            baseline: self.baseline.clone(),
            skipped_windows: self.skipped_windows.clone(),
            stop_reason: self.stop_reason,
            frame_count: self.frames.len(),
        }
    }

    pub fn frames_dataset(&self) -> Dataset {
        Dataset::new(self.frames.clone())
    }

    /// `window,t_end_s,time,label,confidence,sample_count`.
    pub fn predictions_csv(&self) -> String {
        let mut out = String::from("window,t_end_s,time,label,confidence,sample_count\n");
        for p in &self.predictions {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.4},{}",
                p.window_index,
                p.t_end_s,
                super::format_clock(p.t_end_s),
                p.label,
                p.confidence,
                p.sample_count
            );
        }
        out
    }

    /// Writes `meta.json`, `frames.csv` and `predictions.ndjson` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join(META_FILE), &self.meta())?;
        save_dataset(&self.frames_dataset(), dir.join(FRAMES_FILE))?;
        write_predictions(&dir.join(PREDICTIONS_FILE), &self.predictions)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: SessionMeta = read_json(&dir.join(META_FILE))?;
        let frames_path = dir.join(FRAMES_FILE);
        let frames = if frames_path.exists() { load_dataset(&frames_path)?.records } else { Vec::new() };
        Ok(SessionLog {
            config: meta.config,
            subject: meta.subject,
            state_history: meta.state_history,
            predictions: read_predictions(&dir.join(PREDICTIONS_FILE))?,
            skipped_windows: meta.skipped_windows,
            baseline: meta.baseline,
            stop_reason: meta.stop_reason,
            frames,
        })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// One JSON object per line.
pub fn write_predictions(path: &Path, predictions: &[WindowPrediction]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in predictions {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Missing file reads as no predictions.
pub fn read_predictions(path: &Path) -> Result<Vec<WindowPrediction>> {
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::Parse { row: i + 1, message: e.to_string() })?,
        );
    }
    Ok(out)
}

/// Model variance, live-session variance, and their per-cell ratio
/// (session / model), for the classes present in the session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceComparison {
    pub model: VarianceTable,
    pub session: VarianceTable,
    pub ratio: VarianceTable,
}

impl VarianceComparison {
    pub fn from_tables(model: &VarianceTable, session: VarianceTable) -> Result<Self> {
        let mut model_rows = BTreeMap::new();
        let mut ratio_rows = BTreeMap::new();
        for (&label, row) in &session.rows {
            let m = model
                .rows
                .get(&label)
                .ok_or_else(|| Error::argument(format!("model variance has no row for {label}")))?;
            let mut ratio = [0.0; CHANNEL_COUNT];
            for c in 0..CHANNEL_COUNT {
                ratio[c] = if m[c] == row[c] {
                    1.0
                } else if m[c] > 0.0 {
                    row[c] / m[c]
                } else {
                    return Err(Error::Degenerate(format!(
                        "model variance for {label} {} is zero",
                        ChannelId::ALL[c]
                    )));
                };
            }
            model_rows.insert(label, *m);
            ratio_rows.insert(label, ratio);
        }
        Ok(VarianceComparison {
            model: VarianceTable { rows: model_rows },
            session,
            ratio: VarianceTable { rows: ratio_rows },
        })
    }

    /// `group,class,AF3,…,AF4` with groups `model`, `session`, `ratio`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,class");
        for ch in ChannelId::ALL {
            let _ = write!(out, ",{ch}");
        }
        out.push('\n');
        for (group, table) in [("model", &self.model), ("session", &self.session), ("ratio", &self.ratio)] {
            for (label, row) in &table.rows {
                let _ = write!(out, "{group},{label}");
                for v in row {
                    let _ = write!(out, ",{}", format_value(*v));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Compares the variance of a session's labeled frames against `model`.
/// Unlabeled frames are ignored.
pub fn compare_session_variance(frames: &[SampleRecord], model: &VarianceTable) -> Result<VarianceComparison> {
    let labeled: Dataset = frames.iter().filter(|f| f.label.is_some()).cloned().collect();
    if labeled.len() < 2 {
        return Err(Error::argument(format!(
            "session has {} labeled frame(s); need at least 2 per class",
            labeled.len()
        )));
    }
    VarianceComparison::from_tables(model, variance_table(&labeled)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::EmotionLabel;

    fn frames(label: Option<EmotionLabel>, values: &[f64]) -> Vec<SampleRecord> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| SampleRecord {
                subject_id: "u".into(),
                timestamp_ms: i as u64 * 30,
                label,
                values: [v; CHANNEL_COUNT],
            })
            .collect()
    }

    #[test]
    fn identical_data_gives_unit_ratio() {
        let f = frames(Some(EmotionLabel::Relaxed), &[1.0, 5.0, 2.0, 8.0]);
        let model = variance_table(&Dataset::new(f.clone())).unwrap();
        let cmp = compare_session_variance(&f, &model).unwrap();
        assert_eq!(cmp.ratio.rows[&EmotionLabel::Relaxed], [1.0; CHANNEL_COUNT]);
    }

    #[test]
    fn constant_session_channel_has_zero_variance() {
        let f = frames(Some(EmotionLabel::Sad), &[3.0, 3.0, 3.0]);
        let model = VarianceTable { rows: BTreeMap::from([(EmotionLabel::Sad, [2.0; CHANNEL_COUNT])]) };
        let cmp = compare_session_variance(&f, &model).unwrap();
        assert_eq!(cmp.session.rows[&EmotionLabel::Sad], [0.0; CHANNEL_COUNT]);
        assert_eq!(cmp.ratio.rows[&EmotionLabel::Sad], [0.0; CHANNEL_COUNT]);
        assert!(cmp.to_csv().contains("\nratio,SAD,0,"));
    }

    #[test]
    fn insufficient_frames() {
        let model = VarianceTable { rows: BTreeMap::from([(EmotionLabel::Sad, [2.0; CHANNEL_COUNT])]) };
        assert!(compare_session_variance(&frames(Some(EmotionLabel::Sad), &[1.0]), &model).is_err());
        assert!(compare_session_variance(&frames(None, &[1.0, 2.0, 3.0]), &model).is_err());
        assert!(compare_session_variance(&frames(Some(EmotionLabel::Happy), &[1.0, 2.0]), &model).is_err());
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = SessionLog::new(SessionConfig::default());
        log.state_history = vec![
            StateChange { state: SessionState::Idle, t_s: 0.0 },
            StateChange { state: SessionState::Calibrating, t_s: 0.0 },
            StateChange { state: SessionState::Stopped, t_s: 4.0 },
        ];
        log.predictions = vec![WindowPrediction {
            window_index: 1,
            t_end_s: 40.0,
            label: EmotionLabel::Happy,
            confidence: 180.0 / 330.0,
            sample_count: 330,
        }];
        log.frames = frames(Some(EmotionLabel::Happy), &[1.5, 2.25]);
        log.baseline = BaselineStats::from_frames(&[[1.0; CHANNEL_COUNT], [3.0; CHANNEL_COUNT]]);
        log.stop_reason = Some(StopReason::Operator);
        log.save(dir.path()).unwrap();
        let back = SessionLog::load(dir.path()).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.baseline.unwrap().variance, [2.0; CHANNEL_COUNT]);
        let ndjson = fs::read_to_string(dir.path().join(PREDICTIONS_FILE)).unwrap();
        assert_eq!(ndjson.lines().count(), 1);
        assert!(ndjson.starts_with(r#"{"window_index":1,"t_end_s":40.0,"label":"HAPPY","#));
    }
}
