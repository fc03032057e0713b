use affect_core::iqr::{clean_dataset, compute_thresholds, quartiles, ChannelThresholds, IqrConfig, OutlierReport};
use affect_core::rng::seeded;
use affect_core::{ChannelId, Dataset, EmotionLabel, SampleRecord, CHANNEL_COUNT};
use proptest::prelude::*;
use rand::Rng;

fn record(label: EmotionLabel, values: [f64; CHANNEL_COUNT]) -> SampleRecord {
    SampleRecord { subject_id: "P01".into(), timestamp_ms: 0, label: Some(label), values }
}

#[test]
fn four_point_fences() {
    assert_eq!(quartiles(&[1.0, 2.0, 3.0, 4.0]).unwrap(), (1.75, 3.25));
    let t = ChannelThresholds::from_quartiles(ChannelId::AF3, 1.75, 3.25, &IqrConfig::default());
    assert_eq!((t.outlier_low, t.outlier_high), (-2.75, 7.75));
    assert_eq!((t.extreme_low, t.extreme_high), (-7.25, 12.25));
}

/// 100 records near 4200 on every channel; seven get one channel pushed far
/// outside the extreme fence.
fn planted() -> (Dataset, Vec<usize>) {
    let mut rng = seeded(17);
    let planted = vec![3, 18, 41, 42, 67, 88, 99];
    let records = (0..100)
        .map(|i| {
            let mut v = [0.0; CHANNEL_COUNT];
            for x in &mut v {
                *x = 4200.0 + rng.random_range(-50.0..50.0);
            }
            if planted.contains(&i) {
                let ch = i % CHANNEL_COUNT;
                v[ch] += if i % 2 == 0 { 5000.0 } else { -5000.0 };
            }
            record(EmotionLabel::ALL[i % 3], v)
        })
        .collect();
    (Dataset::new(records), planted)
}

#[test]
fn planted_extremes_are_exactly_the_removed_records() {
    let (ds, planted) = planted();
    let cfg = IqrConfig::default();
    let (cleaned, report) = clean_dataset(&ds, &cfg).unwrap();
    assert_eq!(report.total.outliers, 7);
    assert_eq!(cleaned.len(), 93);

    // Independent scan: quartiles per channel, then every record against
    // every fence.
    let brute: Vec<usize> = (0..ds.len())
        .filter(|&i| {
            (0..CHANNEL_COUNT).any(|c| {
                let column: Vec<f64> = ds.records.iter().map(|r| r.values[c]).collect();
                let (q1, q3) = quartiles(&column).unwrap();
                let iqr = q3 - q1;
                let v = ds.records[i].values[c];
                v < q1 - 3.0 * iqr || v > q3 + 3.0 * iqr
            })
        })
        .collect();
    assert_eq!(brute, planted);
    let kept: Vec<&SampleRecord> = ds.records.iter().enumerate().filter(|(i, _)| !planted.contains(i)).map(|(_, r)| r).collect();
    assert_eq!(cleaned.records.iter().collect::<Vec<_>>(), kept);
    report.check_consistency().unwrap();
}

#[test]
fn reference_report_identities() {
    let text = include_str!("fixtures/outlier_report_reference.csv");
    let report = OutlierReport::from_csv(text).unwrap();
    assert_eq!(report.total.collected, 1_106_752);
    assert_eq!(report.total.outliers, 88_494);
    assert_eq!(report.total.retained, 1_018_258);
    for r in report.classes.values() {
        assert_eq!(r.retained, r.collected - r.outliers);
    }
    let relaxed = report.classes[&EmotionLabel::Relaxed];
    assert_eq!((relaxed.collected, relaxed.outliers, relaxed.retained), (395_281, 41_009, 354_272));
    let reparsed = OutlierReport::from_csv(&report.to_csv()).unwrap();
    assert_eq!(reparsed, report);

    let broken = text.replace("354272", "354273");
    assert!(OutlierReport::from_csv(&broken).is_err());
}

fn dataset() -> impl Strategy<Value = Dataset> {
    prop::collection::vec((0usize..3, prop::collection::vec(-1e4f64..1e4, CHANNEL_COUNT)), 4..80).prop_map(|rows| {
        rows.into_iter()
            .map(|(l, v)| record(EmotionLabel::ALL[l], v.try_into().unwrap()))
            .collect()
    })
}

proptest! {
    #[test]
    fn cleaning_keeps_an_ordered_subsequence_inside_the_fences(ds in dataset(), k in 0.5f64..4.0) {
        let cfg = IqrConfig { outlier_factor: k, extreme_factor: 2.0 * k, per_class: false };
        let thresholds = compute_thresholds(&ds, &cfg).unwrap();
        let (cleaned, report) = clean_dataset(&ds, &cfg).unwrap();
        report.check_consistency().unwrap();
        prop_assert_eq!(report.total.collected as usize, ds.len());
        prop_assert_eq!(report.total.retained as usize, cleaned.len());
        let mut it = ds.records.iter();
        for r in &cleaned.records {
            prop_assert!(it.any(|x| x == r), "retained records keep input order");
            for t in &thresholds {
                let v = r.values[t.channel.index()];
                prop_assert!(v >= t.outlier_low && v <= t.outlier_high);
            }
        }
    }

    #[test]
    fn wider_fences_never_remove_more(ds in dataset(), k in 0.5f64..3.0, extra in 0.0f64..3.0) {
        let narrow = IqrConfig { outlier_factor: k, extreme_factor: 2.0 * k, per_class: false };
        let wide = IqrConfig { outlier_factor: k + extra, extreme_factor: 2.0 * (k + extra), per_class: false };
        let (_, a) = clean_dataset(&ds, &narrow).unwrap();
        let (_, b) = clean_dataset(&ds, &wide).unwrap();
        prop_assert!(b.total.outliers <= a.total.outliers);
    }

    #[test]
    fn fences_follow_affine_maps(xs in prop::collection::vec(-1e3f64..1e3, 1..60), a in 0.1f64..10.0, b in -1e3f64..1e3) {
        let (q1, q3) = quartiles(&xs).unwrap();
        let mapped: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let (m1, m3) = quartiles(&mapped).unwrap();
        prop_assert!((m1 - (a * q1 + b)).abs() < 1e-8 * (1.0 + m1.abs()));
        prop_assert!((m3 - (a * q3 + b)).abs() < 1e-8 * (1.0 + m3.abs()));
    }
}
