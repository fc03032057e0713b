use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{auc_one_vs_rest, confusion_with_labels, ConfusionMatrix, MeanConfusion};
use super::normality::{NormalityResult, NormalityTest, ShapiroWilk};
use crate::error::{Error, Result};
use crate::forest::{train, Forest, TrainConfig};
use crate::rng::derive_seed;
use crate::signal::{Dataset, EmotionLabel};
use crate::split::{random_split, sample_subset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldoutOptions {
    pub n_runs: usize,
    pub train_fraction: f64,
    pub base_seed: u64,
}

impl Default for HoldoutOptions {
    fn default() -> Self {
        HoldoutOptions {
            n_runs: 30,
            train_fraction: 0.9,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutRun {
    /// 1-based.
    pub run_index: usize,
    /// Seed of this run's train/test split.
    pub seed: u64,
    pub correct: u64,
    pub incorrect: u64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    /// One-vs-rest AUC per label, scored by the forest's vote fraction.
    pub auc: BTreeMap<EmotionLabel, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub runs: Vec<HoldoutRun>,
    pub mean_accuracy: f64,
    /// Sample standard deviation (n − 1) of run accuracies.
    pub std_accuracy: f64,
    pub mean_confusion: MeanConfusion,
    /// `None` when every run scored the same accuracy (W is undefined).
    pub normality: Option<NormalityResult>,
}

impl ValidationSummary {
    /// `run,correct,incorrect,accuracy` with one line per run.
    pub fn runs_csv(&self) -> String {
        let mut out = String::from("run,correct,incorrect,accuracy\n");
        for r in &self.runs {
            let _ = writeln!(out, "{},{},{},{}", r.run_index, r.correct, r.incorrect, r.accuracy);
        }
        out
    }

    pub fn per_class_accuracy(&self) -> Result<BTreeMap<EmotionLabel, f64>> {
        self.mean_confusion.per_class_accuracy()
    }
}

/// Evaluates `forest` on `test`, tallying over `labels`.
pub fn evaluate(forest: &Forest, test: &Dataset, labels: &[EmotionLabel]) -> Result<(ConfusionMatrix, BTreeMap<EmotionLabel, f64>)> {
    test.require_labeled()?;
    let predictions: Vec<_> = test.records.iter().map(|r| forest.predict_values(&r.values)).collect();
    let predicted: Vec<EmotionLabel> = predictions.iter().map(|p| p.label).collect();
    let actual: Vec<EmotionLabel> = test.records.iter().map(|r| r.label.expect("labeled")).collect();
    let matrix = confusion_with_labels(&predicted, &actual, labels)?;

    let mut auc = BTreeMap::new();
    for &label in labels {
        let scores: Vec<f64> = predictions.iter().map(|p| p.vote_fractions[label.index()]).collect();
        let positives: Vec<bool> = actual.iter().map(|&a| a == label).collect();
        if let Ok(value) = auc_one_vs_rest(&scores, &positives) {
            auc.insert(label, value);
        }
    }
    Ok((matrix, auc))
}

fn run_once(ds: &Dataset, cfg: &TrainConfig, opts: &HoldoutOptions, labels: &[EmotionLabel], run: usize) -> Result<HoldoutRun> {
    let seed = derive_seed(opts.base_seed, run as u64);
    let (train_set, test_set) = random_split(ds, opts.train_fraction, seed)?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::argument(format!(
            "dataset of {} records leaves an empty side at fraction {}",
            ds.len(),
            opts.train_fraction
        )));
    }
    let forest = train(&train_set, cfg)?;
    let (confusion, auc) = evaluate(&forest, &test_set, labels)?;
    let correct = confusion.correct();
    let incorrect = confusion.total() - correct;
    Ok(HoldoutRun {
        run_index: run + 1,
        seed,
        correct,
        incorrect,
        accuracy: correct as f64 / (correct + incorrect) as f64,
        confusion,
        auc,
    })
}

/// Repeated random holdout: `n_runs` independent splits, each with a split
/// seed derived from `(base_seed, run)`, trained with `cfg` and scored on the
/// held-out side. Run accuracies go through Shapiro–Wilk.
pub fn repeated_holdout(ds: &Dataset, cfg: &TrainConfig, opts: &HoldoutOptions) -> Result<ValidationSummary> {
    repeated_holdout_with(ds, cfg, opts, &ShapiroWilk)
}

pub fn repeated_holdout_with(
    ds: &Dataset,
    cfg: &TrainConfig,
    opts: &HoldoutOptions,
    normality: &dyn NormalityTest,
) -> Result<ValidationSummary> {
    if opts.n_runs < 3 {
        return Err(Error::argument(format!(
            "need at least 3 runs for a normality test, got {}",
            opts.n_runs
        )));
    }
    ds.require_labeled()?;
    cfg.validate()?;
    let labels = ds.labels();
    let runs = (0..opts.n_runs)
        .into_par_iter()
        .map(|r| run_once(ds, cfg, opts, &labels, r))
        .collect::<Result<Vec<_>>>()?;

    let accuracies: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
    let n = accuracies.len() as f64;
    let mean_accuracy = accuracies.iter().sum::<f64>() / n;
    let std_accuracy =
        (accuracies.iter().map(|a| (a - mean_accuracy).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let normality = match normality.test(&accuracies) {
        Ok(result) => Some(result),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    let matrices: Vec<ConfusionMatrix> = runs.iter().map(|r| r.confusion.clone()).collect();
    Ok(ValidationSummary {
        mean_confusion: MeanConfusion::from_matrices(&matrices)?,
        runs,
        mean_accuracy,
        std_accuracy,
        normality,
    })
}

/// Label pairs evaluated by [`pairwise_models`], in report order.
pub const LABEL_PAIRS: [(EmotionLabel, EmotionLabel); 3] = [
    (EmotionLabel::Happy, EmotionLabel::Sad),
    (EmotionLabel::Happy, EmotionLabel::Relaxed),
    (EmotionLabel::Relaxed, EmotionLabel::Sad),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseOptions {
    pub subset_size: usize,
    pub holdout: HoldoutOptions,
}

impl Default for PairwiseOptions {
    fn default() -> Self {
        PairwiseOptions {
            subset_size: 250_000,
            holdout: HoldoutOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub pair: (EmotionLabel, EmotionLabel),
    pub sampled: usize,
    pub summary: ValidationSummary,
}

/// Two-class models for each label pair: restrict to the pair, subsample
/// `min(subset_size, available)` records, then run repeated holdout.
pub fn pairwise_models(ds: &Dataset, cfg: &TrainConfig, opts: &PairwiseOptions) -> Result<Vec<PairSummary>> {
    ds.require_labeled()?;
    let counts = ds.class_counts();
    LABEL_PAIRS
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| {
            for label in [a, b] {
                if counts.get(&label).copied().unwrap_or(0) == 0 {
                    return Err(Error::argument(format!("pair {a}–{b}: class {label} has no records")));
                }
            }
            let restricted = ds.filter_labels(&[a, b]);
            let n = opts.subset_size.min(restricted.len());
            let pair_seed = derive_seed(opts.holdout.base_seed, 1_000 + i as u64);
            let subset = sample_subset(&restricted, n, pair_seed)?;
            let holdout = HoldoutOptions {
                base_seed: derive_seed(pair_seed, 0),
                ..opts.holdout
            };
            Ok(PairSummary {
                pair: (a, b),
                sampled: n,
                summary: repeated_holdout(&subset, cfg, &holdout)?,
            })
        })
        .collect()
}
