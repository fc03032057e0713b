//! Random forest classifier built from bootstrap-sampled CART trees with
//! random channel subsets at every node, predicting by hard majority vote.

mod model_file;
mod tree;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::signal::{argmax_label, ChannelValues, Dataset, EmotionLabel, SampleRecord, CHANNEL_COUNT};

pub use model_file::MODEL_FORMAT;
pub use tree::{
    best_split, best_split_with_min_leaf, gini, grow_tree, ClassCounts, Samples, Split, TreeNode,
};

fn default_n_trees() -> usize {
    25
}

fn default_features_per_split() -> usize {
    3
}

fn default_min_samples_leaf() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_n_trees")]
    pub n_trees: usize,
    /// Channels drawn (without replacement) as split candidates at each node.
    #[serde(default = "default_features_per_split")]
    pub features_per_split: usize,
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default = "default_min_samples_leaf")]
    pub min_samples_leaf: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_trees: default_n_trees(),
            features_per_split: default_features_per_split(),
            max_depth: None,
            min_samples_leaf: default_min_samples_leaf(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::argument("n_trees must be at least 1"));
        }
        if !(1..=CHANNEL_COUNT).contains(&self.features_per_split) {
            return Err(Error::argument(format!(
                "features_per_split {} outside [1, {CHANNEL_COUNT}]",
                self.features_per_split
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::argument("min_samples_leaf must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<TreeNode>,
    pub config: TrainConfig,
    /// Labels seen during training, canonical order.
    pub labels: Vec<EmotionLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: EmotionLabel,
    /// Share of trees voting for each label, indexed by [`EmotionLabel::index`].
    pub vote_fractions: [f64; EmotionLabel::COUNT],
}

/// Labeled training matrix extracted from a dataset.
struct TrainingData {
    features: Vec<ChannelValues>,
    labels: Vec<u8>,
    present: Vec<EmotionLabel>,
}

impl TrainingData {
    fn from_dataset(ds: &Dataset) -> Result<Self> {
        ds.require_labeled()?;
        if ds.len() > u32::MAX as usize {
            return Err(Error::argument("dataset too large for u32 row indices"));
        }
        Ok(TrainingData {
            features: ds.records.iter().map(|r| r.values).collect(),
            labels: ds
                .records
                .iter()
                .map(|r| r.label.expect("checked labeled").index() as u8)
                .collect(),
            present: ds.labels(),
        })
    }

    fn grow(&self, cfg: &TrainConfig, tree_index: usize) -> TreeNode {
        let mut rng = rng::seeded(rng::derive_seed(cfg.seed, tree_index as u64));
        let n = self.features.len();
        let rows: Vec<u32> = (0..n).map(|_| rng.random_range(0..n as u32)).collect();
        tree::grow_tree_on_rows(&self.features, &self.labels, &rows, cfg, &mut rng)
    }
}

/// Trains a forest with trees grown in parallel. Tree `t` draws its bootstrap
/// sample and channel subsets from a generator seeded by `(cfg.seed, t)`, so
/// the result does not depend on scheduling.
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<Forest> {
    cfg.validate()?;
    let data = TrainingData::from_dataset(ds)?;
    let trees = (0..cfg.n_trees).into_par_iter().map(|t| data.grow(cfg, t)).collect();
    Ok(Forest {
        trees,
        config: cfg.clone(),
        labels: data.present,
    })
}

/// Single-threaded training; produces the same forest as [`train`].
pub fn train_serial(ds: &Dataset, cfg: &TrainConfig) -> Result<Forest> {
    cfg.validate()?;
    let data = TrainingData::from_dataset(ds)?;
    let trees = (0..cfg.n_trees).map(|t| data.grow(cfg, t)).collect();
    Ok(Forest {
        trees,
        config: cfg.clone(),
        labels: data.present,
    })
}

/// Grows trees one at a time, yielding tree `t` exactly as [`train`] would.
/// Lets callers evaluate growing ensembles without retraining.
pub struct TreeSequence {
    data: TrainingData,
    config: TrainConfig,
    next: usize,
}

impl TreeSequence {
    pub fn new(ds: &Dataset, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(TreeSequence {
            data: TrainingData::from_dataset(ds)?,
            config: cfg.clone(),
            next: 0,
        })
    }
}

impl Iterator for TreeSequence {
    type Item = TreeNode;

    fn next(&mut self) -> Option<TreeNode> {
        let tree = self.data.grow(&self.config, self.next);
        self.next += 1;
        Some(tree)
    }
}

impl Forest {
    /// Number of trees voting for each label.
    pub fn vote_counts(&self, values: &ChannelValues) -> [u32; EmotionLabel::COUNT] {
        let mut votes = [0u32; EmotionLabel::COUNT];
        for tree in &self.trees {
            votes[tree.vote(values).index()] += 1;
        }
        votes
    }

    pub fn predict_values(&self, values: &ChannelValues) -> Prediction {
        let votes = self.vote_counts(values);
        let n = self.trees.len() as f64;
        Prediction {
            label: argmax_label(&votes),
            vote_fractions: votes.map(|v| v as f64 / n),
        }
    }

    pub fn predict_label(&self, values: &ChannelValues) -> EmotionLabel {
        argmax_label(&self.vote_counts(values))
    }
}

pub fn predict(forest: &Forest, record: &SampleRecord) -> Prediction {
    forest.predict_values(&record.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SampleRecord;

    fn labeled(values: ChannelValues, label: EmotionLabel) -> SampleRecord {
        SampleRecord {
            subject_id: "t".into(),
            timestamp_ms: 0,
            label: Some(label),
            values,
        }
    }

    fn leaf(label: EmotionLabel) -> TreeNode {
        let mut class_counts = [0; 3];
        class_counts[label.index()] = 1;
        TreeNode::Leaf { class_counts }
    }

    fn forest_of(leaves: &[(EmotionLabel, usize)]) -> Forest {
        let trees: Vec<TreeNode> = leaves
            .iter()
            .flat_map(|&(l, k)| std::iter::repeat_n(leaf(l), k))
            .collect();
        Forest {
            config: TrainConfig {
                n_trees: trees.len(),
                ..TrainConfig::default()
            },
            trees,
            labels: EmotionLabel::ALL.to_vec(),
        }
    }

    #[test]
    fn unanimous_vote() {
        let p = forest_of(&[(EmotionLabel::Happy, 25)]).predict_values(&[0.0; CHANNEL_COUNT]);
        assert_eq!(p.label, EmotionLabel::Happy);
        assert_eq!(p.vote_fractions, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn plurality_vote_fraction() {
        let f = forest_of(&[(EmotionLabel::Happy, 13), (EmotionLabel::Relaxed, 6), (EmotionLabel::Sad, 6)]);
        let p = f.predict_values(&[0.0; CHANNEL_COUNT]);
        assert_eq!(p.label, EmotionLabel::Happy);
        assert_eq!(p.vote_fractions[0], 0.52);
        assert!((p.vote_fractions.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn vote_ties_use_canonical_order() {
        let f = forest_of(&[(EmotionLabel::Sad, 2), (EmotionLabel::Relaxed, 2)]);
        assert_eq!(f.predict_label(&[0.0; CHANNEL_COUNT]), EmotionLabel::Relaxed);
    }

    #[test]
    fn single_class_training() {
        let ds: Dataset = (0..20)
            .map(|i| labeled([i as f64; CHANNEL_COUNT], EmotionLabel::Sad))
            .collect();
        let forest = train(&ds, &TrainConfig::default()).unwrap();
        assert_eq!(forest.trees.len(), 25);
        assert_eq!(forest.labels, vec![EmotionLabel::Sad]);
        for probe in [-1e6, 0.0, 3.5, 1e9] {
            let p = forest.predict_values(&[probe; CHANNEL_COUNT]);
            assert_eq!(p.label, EmotionLabel::Sad);
            assert_eq!(p.vote_fractions[EmotionLabel::Sad.index()], 1.0);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(train(&Dataset::default(), &TrainConfig::default()).is_err());
        let unlabeled = Dataset::new(vec![SampleRecord {
            label: None,
            ..labeled([0.0; CHANNEL_COUNT], EmotionLabel::Happy)
        }]);
        assert!(train(&unlabeled, &TrainConfig::default()).is_err());
        let ds: Dataset = vec![labeled([0.0; CHANNEL_COUNT], EmotionLabel::Happy)].into_iter().collect();
        for cfg in [
            TrainConfig { n_trees: 0, ..TrainConfig::default() },
            TrainConfig { features_per_split: 0, ..TrainConfig::default() },
            TrainConfig { features_per_split: 15, ..TrainConfig::default() },
        ] {
            assert!(train(&ds, &cfg).is_err());
        }
    }

    #[test]
    fn tree_sequence_matches_batch_training() {
        let ds: Dataset = (0..90)
            .map(|i| {
                let mut v = [0.0; CHANNEL_COUNT];
                for (c, x) in v.iter_mut().enumerate() {
                    *x = ((i * 7 + c * 13) % 29) as f64;
                }
                labeled(v, EmotionLabel::ALL[i % 3])
            })
            .collect();
        let cfg = TrainConfig { n_trees: 5, seed: 11, ..TrainConfig::default() };
        let forest = train(&ds, &cfg).unwrap();
        let seq: Vec<TreeNode> = TreeSequence::new(&ds, &cfg).unwrap().take(5).collect();
        assert_eq!(forest.trees, seq);
    }
}
