//! Model validation: repeated holdout, pairwise models, confusion and AUC
//! metrics, normality of run accuracies, tree-count sweep, variance tables.

mod holdout;
mod metrics;
mod normality;
mod sweep;
mod variance;

pub use holdout::{
    evaluate, pairwise_models, repeated_holdout, repeated_holdout_with, HoldoutOptions, HoldoutRun, PairSummary,
    PairwiseOptions, ValidationSummary, LABEL_PAIRS,
};
pub use metrics::{
    auc_one_vs_rest, confusion, confusion_with_labels, per_class_accuracy, ConfusionMatrix, MeanConfusion,
};
pub use normality::{shapiro_wilk, NormalityResult, NormalityTest, ShapiroWilk};
pub use sweep::{stopping_point, tree_count_sweep, SweepOptions, SweepPoint, SweepResult};
pub use variance::{sample_variance, variance_table, VarianceTable};
