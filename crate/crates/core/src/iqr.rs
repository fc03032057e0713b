//! Interquartile-range outlier filtering.
//!
//! Each channel gets two fences: `[q1 − k·iqr, q3 + k·iqr]` with the outlier
//! factor and with the (wider) extreme factor. A record is flagged when any
//! channel leaves a fence; flagged records are dropped and tallied per class.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{ChannelId, Dataset, EmotionLabel, SampleRecord, CHANNEL_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IqrConfig {
    pub outlier_factor: f64,
    pub extreme_factor: f64,
    /// Compute fences separately for each class instead of over the pooled data.
    #[serde(default)]
    pub per_class: bool,
}

impl Default for IqrConfig {
    fn default() -> Self {
        IqrConfig {
            outlier_factor: 3.0,
            extreme_factor: 6.0,
            per_class: false,
        }
    }
}

impl IqrConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.outlier_factor > 0.0
            && self.extreme_factor >= self.outlier_factor
            && self.extreme_factor.is_finite();
        if !ok {
            return Err(Error::argument(format!(
                "IQR factors must satisfy extreme ({}) >= outlier ({}) > 0",
                self.extreme_factor, self.outlier_factor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelThresholds {
    pub channel: ChannelId,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub outlier_low: f64,
    pub outlier_high: f64,
    pub extreme_low: f64,
    pub extreme_high: f64,
}

impl ChannelThresholds {
    pub fn from_quartiles(channel: ChannelId, q1: f64, q3: f64, cfg: &IqrConfig) -> Self {
        let iqr = q3 - q1;
        ChannelThresholds {
            channel,
            q1,
            q3,
            iqr,
            outlier_low: q1 - cfg.outlier_factor * iqr,
            outlier_high: q3 + cfg.outlier_factor * iqr,
            extreme_low: q1 - cfg.extreme_factor * iqr,
            extreme_high: q3 + cfg.extreme_factor * iqr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RecordFlag {
    Clean,
    Outlier,
    Extreme,
}

/// Linear-interpolation quartiles: quantile `p` of sorted `x` sits at
/// `h = p·(n−1)`, value `x[⌊h⌋] + (h−⌊h⌋)·(x[⌊h⌋+1] − x[⌊h⌋])`.
pub fn quartiles(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::argument("quartiles of an empty list"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::argument("quartiles require finite values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok((quantile_sorted(&sorted, 0.25), quantile_sorted(&sorted, 0.75)))
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    match sorted.get(lo + 1) {
        Some(&next) if frac > 0.0 => sorted[lo] + frac * (next - sorted[lo]),
        _ => sorted[lo],
    }
}

fn thresholds_for(records: &[&SampleRecord], cfg: &IqrConfig) -> Result<Vec<ChannelThresholds>> {
    if records.is_empty() {
        return Err(Error::argument("cannot compute thresholds of an empty dataset"));
    }
    let mut column = Vec::with_capacity(records.len());
    ChannelId::ALL
        .iter()
        .map(|&ch| {
            column.clear();
            column.extend(records.iter().map(|r| r.value(ch)));
            let (q1, q3) = quartiles(&column)?;
            Ok(ChannelThresholds::from_quartiles(ch, q1, q3, cfg))
        })
        .collect()
}

/// Fences for all fourteen channels computed over every record of `ds`.
pub fn compute_thresholds(ds: &Dataset, cfg: &IqrConfig) -> Result<Vec<ChannelThresholds>> {
    cfg.validate()?;
    let records: Vec<&SampleRecord> = ds.records.iter().collect();
    thresholds_for(&records, cfg)
}

/// Fences computed separately for each class present in `ds`.
pub fn compute_class_thresholds(
    ds: &Dataset,
    cfg: &IqrConfig,
) -> Result<BTreeMap<EmotionLabel, Vec<ChannelThresholds>>> {
    cfg.validate()?;
    ds.require_labeled()?;
    ds.labels()
        .into_iter()
        .map(|label| {
            let records: Vec<&SampleRecord> =
                ds.records.iter().filter(|r| r.label == Some(label)).collect();
            Ok((label, thresholds_for(&records, cfg)?))
        })
        .collect()
}

/// Flags a record; a value exactly on a fence is inside it.
pub fn flag_record(record: &SampleRecord, thresholds: &[ChannelThresholds]) -> RecordFlag {
    debug_assert_eq!(thresholds.len(), CHANNEL_COUNT);
    let mut flag = RecordFlag::Clean;
    for t in thresholds {
        let v = record.value(t.channel);
        if v < t.extreme_low || v > t.extreme_high {
            return RecordFlag::Extreme;
        }
        if v < t.outlier_low || v > t.outlier_high {
            flag = RecordFlag::Outlier;
        }
    }
    flag
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub collected: u64,
    pub outliers: u64,
    pub retained: u64,
}

impl ReportRow {
    pub fn new(collected: u64, outliers: u64) -> Result<Self> {
        let retained = collected
            .checked_sub(outliers)
            .ok_or_else(|| Error::argument(format!("{outliers} outliers exceed {collected} collected")))?;
        Ok(ReportRow {
            collected,
            outliers,
            retained,
        })
    }
}

/// Per-class cleaning tally plus a totals row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub classes: BTreeMap<EmotionLabel, ReportRow>,
    pub total: ReportRow,
}

impl OutlierReport {
    pub fn from_rows(classes: BTreeMap<EmotionLabel, ReportRow>) -> Self {
        let (collected, outliers, retained) = classes.values().fold((0, 0, 0), |acc, r| {
            (acc.0 + r.collected, acc.1 + r.outliers, acc.2 + r.retained)
        });
        OutlierReport {
            classes,
            total: ReportRow {
                collected,
                outliers,
                retained,
            },
        }
    }

    /// Checks `retained = collected − outliers` on every row and that the
    /// class rows sum to the totals row.
    pub fn check_consistency(&self) -> Result<()> {
        let rows = self
            .classes
            .iter()
            .map(|(l, r)| (l.as_str(), r))
            .chain(std::iter::once(("TOTAL", &self.total)));
        for (name, r) in rows {
            if r.outliers > r.collected || r.collected - r.outliers != r.retained {
                return Err(Error::Format(format!(
                    "{name}: {} collected − {} outliers ≠ {} retained",
                    r.collected, r.outliers, r.retained
                )));
            }
        }
        let sum = Self::from_rows(self.classes.clone()).total;
        if sum != self.total {
            return Err(Error::Format(format!(
                "class rows sum to {sum:?}, totals row is {:?}",
                self.total
            )));
        }
        Ok(())
    }

    /// CSV with header `class,collected,outliers,total`, one row per class and
    /// a final `TOTAL` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,collected,outliers,total\n");
        for (label, r) in &self.classes {
            let _ = writeln!(out, "{label},{},{},{}", r.collected, r.outliers, r.retained);
        }
        let t = &self.total;
        let _ = writeln!(out, "TOTAL,{},{},{}", t.collected, t.outliers, t.retained);
        out
    }

    /// Parses the CSV form, verifying every arithmetic identity.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some("class,collected,outliers,total") {
            return Err(Error::Format("expected header class,collected,outliers,total".into()));
        }
        let mut classes = BTreeMap::new();
        let mut total = None;
        for (i, line) in lines.enumerate() {
            let row = i + 1;
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    row,
                    message: format!("expected 4 fields, found {}", fields.len()),
                });
            }
            let num = |s: &str| {
                s.parse::<u64>().map_err(|_| Error::Parse {
                    row,
                    message: format!("invalid count {s:?}"),
                })
            };
            let parsed = ReportRow {
                collected: num(fields[1])?,
                outliers: num(fields[2])?,
                retained: num(fields[3])?,
            };
            if fields[0] == "TOTAL" {
                total = Some(parsed);
            } else {
                let label: EmotionLabel = fields[0].parse().map_err(|_| Error::Parse {
                    row,
                    message: format!("unknown class {:?}", fields[0]),
                })?;
                classes.insert(label, parsed);
            }
        }
        let report = OutlierReport {
            classes,
            total: total.ok_or_else(|| Error::Format("missing TOTAL row".into()))?,
        };
        report.check_consistency()?;
        Ok(report)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Removes every OUTLIER or EXTREME record and reports per-class tallies.
pub fn clean_dataset(ds: &Dataset, cfg: &IqrConfig) -> Result<(Dataset, OutlierReport)> {
    ds.require_labeled()?;
    let flags: Vec<RecordFlag> = if cfg.per_class {
        let by_class = compute_class_thresholds(ds, cfg)?;
        ds.records
            .iter()
            .map(|r| flag_record(r, &by_class[&r.label.expect("labeled")]))
            .collect()
    } else {
        let thresholds = compute_thresholds(ds, cfg)?;
        ds.records.iter().map(|r| flag_record(r, &thresholds)).collect()
    };

    let mut tallies: BTreeMap<EmotionLabel, (u64, u64)> = BTreeMap::new();
    let mut kept = Vec::with_capacity(ds.len());
    for (record, flag) in ds.records.iter().zip(&flags) {
        let entry = tallies.entry(record.label.expect("labeled")).or_default();
        entry.0 += 1;
        if *flag == RecordFlag::Clean {
            kept.push(record.clone());
        } else {
            entry.1 += 1;
        }
    }
    let rows = tallies
        .into_iter()
        .map(|(l, (c, o))| Ok((l, ReportRow::new(c, o)?)))
        .collect::<Result<_>>()?;
    Ok((ds.with_records(kept), OutlierReport::from_rows(rows)))
}
