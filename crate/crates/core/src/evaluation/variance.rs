use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset_io::format_value;
use crate::error::{Error, Result};
use crate::signal::{ChannelId, ChannelValues, Dataset, EmotionLabel, CHANNEL_COUNT};

/// Sample variance (divisor n − 1) per class and channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceTable {
    pub rows: BTreeMap<EmotionLabel, ChannelValues>,
}

impl VarianceTable {
    pub fn get(&self, label: EmotionLabel, channel: ChannelId) -> Option<f64> {
        self.rows.get(&label).map(|row| row[channel.index()])
    }

    pub fn validate(&self) -> Result<()> {
        for (label, row) in &self.rows {
            if let Some(c) = row.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Format(format!(
                    "variance for {label} {} is {}",
                    ChannelId::from_index(c).expect("channel"),
                    row[c]
                )));
            }
        }
        Ok(())
    }

    /// `class,AF3,…,AF4`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class");
        for ch in ChannelId::ALL {
            let _ = write!(out, ",{ch}");
        }
        out.push('\n');
        for (label, row) in &self.rows {
            out.push_str(label.as_str());
            for v in row {
                let _ = write!(out, ",{}", format_value(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
        let expected: Vec<String> = std::iter::once("class".to_string())
            .chain(ChannelId::ALL.iter().map(|c| c.name().to_string()))
            .collect();
        if headers.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::Format(format!(
                "variance header must be {}",
                expected.join(",")
            )));
        }
        let mut rows = BTreeMap::new();
        for (i, rec) in reader.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| Error::Parse { row, message: e.to_string() })?;
            let label: EmotionLabel = rec[0]
                .parse()
                .map_err(|e: Error| Error::Parse { row, message: e.to_string() })?;
            let mut values = [0.0; CHANNEL_COUNT];
            for (c, v) in values.iter_mut().enumerate() {
                *v = rec[c + 1].parse().map_err(|_| Error::Parse {
                    row,
                    message: format!("{} is not a number: {:?}", ChannelId::ALL[c], &rec[c + 1]),
                })?;
            }
            if rows.insert(label, values).is_some() {
                return Err(Error::Parse { row, message: format!("duplicate class {label}") });
            }
        }
        let table = VarianceTable { rows };
        table.validate()?;
        Ok(table)
    }
}

/// Two-pass sample variance.
pub fn sample_variance(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::argument(format!("sample variance needs 2 values, got {}", xs.len())));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    Ok(xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

pub fn variance_table(ds: &Dataset) -> Result<VarianceTable> {
    ds.require_labeled()?;
    let mut rows = BTreeMap::new();
    for (label, count) in ds.class_counts() {
        if count < 2 {
            return Err(Error::argument(format!("class {label} has {count} record(s); need at least 2")));
        }
        let members: Vec<&ChannelValues> =
            ds.records.iter().filter(|r| r.label == Some(label)).map(|r| &r.values).collect();
        let mut row = [0.0; CHANNEL_COUNT];
        for (c, v) in row.iter_mut().enumerate() {
            let column: Vec<f64> = members.iter().map(|vals| vals[c]).collect();
            *v = sample_variance(&column)?;
        }
        rows.insert(label, row);
    }
    Ok(VarianceTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SampleRecord;

    fn ds_from(columns: &[(EmotionLabel, Vec<f64>)]) -> Dataset {
        columns
            .iter()
            .flat_map(|(label, xs)| {
                xs.iter().map(move |&x| SampleRecord {
                    subject_id: "s".into(),
                    timestamp_ms: 0,
                    label: Some(*label),
                    values: [x; CHANNEL_COUNT],
                })
            })
            .collect()
    }

    #[test]
    fn hand_computed_variance() {
        let v = sample_variance(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert!((v - 32.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn constant_channel_is_zero() {
        let t = variance_table(&ds_from(&[(EmotionLabel::Sad, vec![3.0; 5])])).unwrap();
        assert_eq!(t.rows[&EmotionLabel::Sad], [0.0; CHANNEL_COUNT]);
    }

    #[test]
    fn singleton_class_rejected() {
        let ds = ds_from(&[(EmotionLabel::Sad, vec![1.0, 2.0]), (EmotionLabel::Happy, vec![1.0])]);
        assert!(variance_table(&ds).unwrap_err().to_string().contains("HAPPY"));
    }

    #[test]
    fn csv_round_trip() {
        let ds = ds_from(&[
            (EmotionLabel::Happy, vec![1.0, 2.5, 9.0]),
            (EmotionLabel::Relaxed, vec![0.1, 0.2]),
        ]);
        let t = variance_table(&ds).unwrap();
        let text = t.to_csv();
        assert!(text.starts_with("class,AF3,F7,F3,FC5,T7,P7,O1,O2,P8,T8,FC6,F4,F8,AF4\nHAPPY,"));
        assert_eq!(VarianceTable::from_csv(&text).unwrap(), t);
    }

    #[test]
    fn csv_rejects_negative_and_duplicates() {
        let header = "class,AF3,F7,F3,FC5,T7,P7,O1,O2,P8,T8,FC6,F4,F8,AF4\n";
        let neg = format!("{header}SAD,-1,1,1,1,1,1,1,1,1,1,1,1,1,1\n");
        assert!(VarianceTable::from_csv(&neg).is_err());
        let row = "SAD,1,1,1,1,1,1,1,1,1,1,1,1,1,1\n";
        assert!(VarianceTable::from_csv(&format!("{header}{row}{row}")).is_err());
    }
}
