use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{TrainConfig, TreeSequence};
use crate::signal::{argmax_label, Dataset, EmotionLabel};
use crate::split::random_split;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub epsilon: f64,
    pub max_trees: usize,
    pub train_fraction: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            epsilon: 0.001,
            max_trees: 100,
            train_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n_trees: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub chosen: usize,
    /// The stopping rule never fired before `max_trees`.
    pub saturated: bool,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n_trees,accuracy\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{}", p.n_trees, p.accuracy);
        }
        out
    }
}

/// First tree count `n ≥ 2` with `|acc(n) − acc(n−1)| < epsilon`, where
/// `accuracies[i]` is the accuracy with `i + 1` trees.
pub fn stopping_point(accuracies: &[f64], epsilon: f64) -> Option<usize> {
    accuracies
        .windows(2)
        .position(|w| (w[1] - w[0]).abs() < epsilon)
        .map(|i| i + 2)
}

/// Grows the forest one tree at a time on a single fixed split (seeded by
/// `cfg.seed`) and stops once consecutive accuracies differ by less than
/// `epsilon`. Tree `t` is identical to tree `t` of a full training run, so
/// accuracy at `n` equals that of a freshly trained `n`-tree forest.
pub fn tree_count_sweep(ds: &Dataset, cfg: &TrainConfig, opts: &SweepOptions) -> Result<SweepResult> {
    if !(opts.epsilon > 0.0) {
        return Err(Error::argument(format!("epsilon {} must be positive", opts.epsilon)));
    }
    if opts.max_trees == 0 {
        return Err(Error::argument("max_trees must be at least 1"));
    }
    ds.require_labeled()?;
    let (train_set, test_set) = random_split(ds, opts.train_fraction, cfg.seed)?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::argument("sweep split leaves an empty side"));
    }
    let actual: Vec<EmotionLabel> = test_set.records.iter().map(|r| r.label.expect("labeled")).collect();
    let mut votes = vec![[0u32; EmotionLabel::COUNT]; test_set.len()];
    let mut points = Vec::new();
    for (t, tree) in TreeSequence::new(&train_set, cfg)?.take(opts.max_trees).enumerate() {
        let mut correct = 0usize;
        for ((record, tally), truth) in test_set.records.iter().zip(votes.iter_mut()).zip(&actual) {
            tally[tree.vote(&record.values).index()] += 1;
            correct += (argmax_label(tally) == *truth) as usize;
        }
        points.push(SweepPoint {
            n_trees: t + 1,
            accuracy: correct as f64 / test_set.len() as f64,
        });
        let tail: Vec<f64> = points.iter().rev().take(2).rev().map(|p| p.accuracy).collect();
        if stopping_point(&tail, opts.epsilon).is_some() {
            return Ok(SweepResult {
                chosen: points.len(),
                points,
                saturated: false,
            });
        }
    }
    Ok(SweepResult {
        chosen: opts.max_trees,
        points,
        saturated: true,
    })
}
