//! Dataset CSV format.
//!
//! Header: `subject,timestamp_ms,label,AF3,...,AF4`. The label column may be
//! empty for unlabeled streams. Values are written with Rust's shortest
//! round-trip float formatting so `load(save(ds)) == ds` exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::{ChannelId, Dataset, SampleRecord, CHANNEL_COUNT};

const LEADING_COLUMNS: [&str; 3] = ["subject", "timestamp_ms", "label"];

pub fn header() -> Vec<&'static str> {
    LEADING_COLUMNS
        .iter()
        .copied()
        .chain(ChannelId::ALL.iter().map(|c| c.name()))
        .collect()
}

pub fn header_line() -> String {
    header().join(",")
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file))
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let found = rdr
        .headers()
        .map_err(|e| Error::Format(format!("unreadable header: {e}")))?
        .clone();
    check_header(found.iter())?;

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        // Row numbers are 1-based data rows (the header is row 0).
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        records.push(parse_row(&row, row_no)?);
    }
    Ok(Dataset::new(records))
}

fn check_header<'a>(found: impl Iterator<Item = &'a str>) -> Result<()> {
    let expected = header();
    let found: Vec<&str> = found.collect();
    for (pos, want) in expected.iter().enumerate() {
        match found.get(pos) {
            None => return Err(Error::Format(format!("missing column {want}"))),
            Some(got) if got != want => {
                return Err(Error::Format(format!(
                    "column {} is {got:?}, expected {want}",
                    pos + 1
                )))
            }
            Some(_) => {}
        }
    }
    if let Some(extra) = found.get(expected.len()) {
        return Err(Error::Format(format!("unexpected column {extra}")));
    }
    Ok(())
}

fn parse_row(row: &csv::StringRecord, row_no: usize) -> Result<SampleRecord> {
    let parse_err = |message: String| Error::Parse { row: row_no, message };
    if row.len() != 3 + CHANNEL_COUNT {
        return Err(parse_err(format!(
            "expected {} fields, found {}",
            3 + CHANNEL_COUNT,
            row.len()
        )));
    }
    let subject_id = row[0].to_string();
    let timestamp_ms = row[1]
        .parse::<u64>()
        .map_err(|_| parse_err(format!("invalid timestamp_ms {:?}", &row[1])))?;
    let label = match &row[2] {
        "" => None,
        s => Some(s.parse().map_err(|_| parse_err(format!("unknown label {s:?}")))?),
    };
    let mut values = [0.0; CHANNEL_COUNT];
    for (ch, slot) in ChannelId::ALL.iter().zip(values.iter_mut()) {
        let raw = &row[3 + ch.index()];
        let v = raw
            .parse::<f64>()
            .map_err(|_| parse_err(format!("non-numeric value {raw:?} in channel {ch}")))?;
        if !v.is_finite() {
            return Err(parse_err(format!("non-finite value {raw:?} in channel {ch}")));
        }
        *slot = v;
    }
    Ok(SampleRecord {
        subject_id,
        timestamp_ms,
        label,
        values,
    })
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_dataset(ds, &mut w).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_dataset<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let io_err = |e: csv::Error| Error::io("<csv>", std::io::Error::other(e.to_string()));
    wtr.write_record(header()).map_err(io_err)?;
    let mut fields: Vec<String> = Vec::with_capacity(3 + CHANNEL_COUNT);
    for record in &ds.records {
        record.validate()?;
        fields.clear();
        fields.push(record.subject_id.clone());
        fields.push(record.timestamp_ms.to_string());
        fields.push(record.label.map(|l| l.as_str().to_string()).unwrap_or_default());
        fields.extend(record.values.iter().map(|v| format_value(*v)));
        wtr.write_record(&fields).map_err(io_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::EmotionLabel;
    use proptest::prelude::*;

    fn rec(label: Option<EmotionLabel>, values: [f64; CHANNEL_COUNT]) -> SampleRecord {
        SampleRecord {
            subject_id: "P01".into(),
            timestamp_ms: 30,
            label,
            values,
        }
    }

    fn to_string(ds: &Dataset) -> String {
        let mut buf = Vec::new();
        write_dataset(ds, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_dataset_is_header_only() {
        assert_eq!(to_string(&Dataset::default()), format!("{}\n", header_line()));
    }

    #[test]
    fn zero_record_row() {
        let text = to_string(&Dataset::new(vec![rec(None, [0.0; CHANNEL_COUNT])]));
        let row = text.lines().nth(1).unwrap();
        assert_eq!(row, format!("P01,30,{}", ",0".repeat(CHANNEL_COUNT)));
    }

    #[test]
    fn two_happy_rows() {
        let text = format!(
            "{}\nA,0,HAPPY{}\nA,30,HAPPY{}\n",
            header_line(),
            ",1.5".repeat(14),
            ",2".repeat(14)
        );
        let ds = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.class_counts().get(&EmotionLabel::Happy), Some(&2));
        assert_eq!(ds.records[1].values[13], 2.0);
    }

    #[test]
    fn reordered_header_is_rejected() {
        let bad = header_line().replace("AF3,F7", "F7,AF3");
        let err = read_dataset(format!("{bad}\n").as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Format(ref m) if m.contains("F7")), "{err}");
    }

    #[test]
    fn missing_and_extra_columns_are_named() {
        let missing = header_line().replace(",AF4", "");
        let err = read_dataset(format!("{missing}\n").as_bytes()).unwrap_err();
        assert!(err.to_string().contains("missing column AF4"), "{err}");

        let extra = format!("{},REF\n", header_line());
        let err = read_dataset(extra.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("unexpected column REF"), "{err}");
    }

    #[test]
    fn non_numeric_value_reports_row() {
        let text = format!(
            "{}\nA,0,SAD{}\nA,1,SAD,x{}\n",
            header_line(),
            ",1".repeat(14),
            ",1".repeat(13)
        );
        match read_dataset(text.as_bytes()).unwrap_err() {
            Error::Parse { row, message } => {
                assert_eq!(row, 2);
                assert!(message.contains("AF3"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_label_is_parse_error() {
        let text = format!("{}\nA,0,ANGRY{}\n", header_line(), ",1".repeat(14));
        let err = read_dataset(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, .. }), "{err}");
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = save_dataset(&Dataset::default(), "/nonexistent-dir/x.csv").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    fn arb_record() -> impl Strategy<Value = SampleRecord> {
        (
            "[A-Za-z0-9_]{1,8}",
            any::<u32>(),
            prop::option::of(0usize..3),
            prop::array::uniform14(prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL),
        )
            .prop_map(|(subject, ts, label, values)| SampleRecord {
                subject_id: subject,
                timestamp_ms: ts as u64,
                label: label.and_then(EmotionLabel::from_index),
                values,
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn save_then_load_is_identity(records in prop::collection::vec(arb_record(), 1000)) {
            let ds = Dataset::new(records);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("d.csv");
            save_dataset(&ds, &path).unwrap();
            let back = load_dataset(&path).unwrap();
            prop_assert_eq!(back.records.len(), ds.records.len());
            for (a, b) in ds.records.iter().zip(&back.records) {
                prop_assert_eq!(&a.subject_id, &b.subject_id);
                prop_assert_eq!(a.timestamp_ms, b.timestamp_ms);
                prop_assert_eq!(a.label, b.label);
                for (x, y) in a.values.iter().zip(&b.values) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }
}
