//! Greedy split search against brute-force enumeration, and training
//! determinism across thread pools.

use affect_core::acquisition::{synthetic_source, SyntheticProfile};
use affect_core::forest::{best_split, predict, train, train_serial, Samples, TrainConfig};
use affect_core::{ChannelId, ChannelValues, Dataset, EmotionLabel, CHANNEL_COUNT};
use proptest::prelude::*;

fn gini_of(counts: &[u64; 3]) -> f64 {
    let n: u64 = counts.iter().sum();
    1.0 - counts.iter().map(|&c| (c as f64 / n as f64).powi(2)).sum::<f64>()
}

fn counts<'a>(labels: impl Iterator<Item = &'a EmotionLabel>) -> [u64; 3] {
    let mut out = [0; 3];
    for l in labels {
        out[l.index()] += 1;
    }
    out
}

/// Every `(channel, threshold, decrease)` with the threshold midway between
/// consecutive distinct values, in channel-then-threshold order.
fn enumerate_splits(features: &[ChannelValues], labels: &[EmotionLabel], channels: &[ChannelId]) -> Vec<(ChannelId, f64, f64)> {
    let parent = gini_of(&counts(labels.iter()));
    let n = labels.len() as f64;
    let mut out = Vec::new();
    for &ch in channels {
        let mut distinct: Vec<f64> = features.iter().map(|f| f[ch.index()]).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        for pair in distinct.windows(2) {
            let t = (pair[0] + pair[1]) / 2.0;
            let left = counts(labels.iter().zip(features).filter(|(_, f)| f[ch.index()] <= t).map(|(l, _)| l));
            let right = counts(labels.iter().zip(features).filter(|(_, f)| f[ch.index()] > t).map(|(l, _)| l));
            let nl: u64 = left.iter().sum();
            let nr: u64 = right.iter().sum();
            let dec = parent - nl as f64 / n * gini_of(&left) - nr as f64 / n * gini_of(&right);
            out.push((ch, t, dec));
        }
    }
    out
}

fn fixture() -> impl Strategy<Value = (Vec<ChannelValues>, Vec<EmotionLabel>, usize)> {
    (2usize..=12, 1usize..=2).prop_flat_map(|(n, k)| {
        (
            prop::collection::vec(prop::collection::vec(0u8..6, k), n),
            prop::collection::vec(0usize..3, n),
            Just(k),
        )
            .prop_map(|(rows, labels, k)| {
                let features = rows
                    .into_iter()
                    .map(|r| {
                        let mut v = [0.0; CHANNEL_COUNT];
                        for (c, x) in r.into_iter().enumerate() {
                            v[c] = x as f64;
                        }
                        v
                    })
                    .collect();
                let labels = labels.into_iter().map(|i| EmotionLabel::ALL[i]).collect();
                (features, labels, k)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3000))]

    #[test]
    fn greedy_split_matches_exhaustive_enumeration((features, labels, k) in fixture()) {
        let channels = &ChannelId::ALL[..k];
        let samples = Samples::new(&features, &labels).unwrap();
        let found = best_split(&samples, channels);
        let all = enumerate_splits(&features, &labels, channels);
        let pure = counts(labels.iter()).iter().filter(|&&c| c > 0).count() < 2;
        if pure || all.is_empty() {
            prop_assert!(found.is_none(), "expected no split, got {found:?}");
            return Ok(());
        }
        let split = found.expect("a split exists");
        let max = all.iter().map(|s| s.2).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((split.impurity_decrease - max).abs() < 1e-9, "{} vs {max}", split.impurity_decrease);
        let first_best = all.iter().find(|s| s.2 >= max - 1e-9).unwrap();
        prop_assert_eq!(split.channel, first_best.0);
        prop_assert_eq!(split.threshold, first_best.1);
    }
}

fn synthetic(per_class: u64, seed: u64) -> Dataset {
    let profile = SyntheticProfile::default();
    EmotionLabel::ALL
        .iter()
        .flat_map(|&l| synthetic_source(&profile, l, seed + l.index() as u64).unwrap().with_limit(per_class))
        .collect()
}

#[test]
fn serial_and_parallel_training_agree_bit_for_bit() {
    let ds = synthetic(300, 11);
    let cfg = TrainConfig { n_trees: 25, seed: 99, ..TrainConfig::default() };
    let parallel = train(&ds, &cfg).unwrap();
    let serial = train_serial(&ds, &cfg).unwrap();
    assert_eq!(parallel, serial);
    assert_eq!(parallel, train(&ds, &cfg).unwrap());

    let probes = synthetic(334, 5000);
    let probes = &probes.records[..1000];
    for r in probes {
        let a = predict(&parallel, r);
        let b = predict(&serial, r);
        assert_eq!(a.label, b.label);
        for (x, y) in a.vote_fractions.iter().zip(b.vote_fractions) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    let other = train(&ds, &TrainConfig { seed: 100, ..cfg }).unwrap();
    assert_ne!(other, parallel);
}
