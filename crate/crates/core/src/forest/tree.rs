//! CART classification trees with Gini impurity and axis-aligned binary
//! splits at midpoints between consecutive distinct values.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::PinnedRng;
use crate::signal::{argmax_label, ChannelId, ChannelValues, EmotionLabel, CHANNEL_COUNT};

use super::TrainConfig;

/// Per-label sample counts held by a leaf, indexed by [`EmotionLabel::index`].
pub type ClassCounts = [u32; EmotionLabel::COUNT];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeNode {
    Split {
        #[serde(with = "channel_index")]
        channel: ChannelId,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        class_counts: ClassCounts,
    },
}

mod channel_index {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    use crate::signal::ChannelId;

    pub fn serialize<S: Serializer>(ch: &ChannelId, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(ch.index() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ChannelId, D::Error> {
        let i = u64::deserialize(d)?;
        ChannelId::from_index(i as usize)
            .ok_or_else(|| D::Error::custom(format!("channel index {i} out of range 0..14")))
    }
}

impl TreeNode {
    /// Follows splits (`value <= threshold` goes left) down to a leaf.
    pub fn leaf_for(&self, values: &ChannelValues) -> &ClassCounts {
        let mut node = self;
        loop {
            match node {
                TreeNode::Split {
                    channel,
                    threshold,
                    left,
                    right,
                } => {
                    node = if values[channel.index()] <= *threshold { left } else { right };
                }
                TreeNode::Leaf { class_counts } => return class_counts,
            }
        }
    }

    /// Majority class of the leaf reached by `values`.
    pub fn vote(&self, values: &ChannelValues) -> EmotionLabel {
        argmax_label(self.leaf_for(values))
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
            TreeNode::Leaf { .. } => 0,
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
            TreeNode::Leaf { .. } => 1,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            TreeNode::Split {
                threshold, left, right, ..
            } => {
                if !threshold.is_finite() {
                    return Err(Error::Model(format!("non-finite threshold {threshold}")));
                }
                left.validate()?;
                right.validate()
            }
            TreeNode::Leaf { class_counts } => {
                if class_counts.iter().all(|&c| c == 0) {
                    return Err(Error::Model("leaf with all-zero class counts".into()));
                }
                Ok(())
            }
        }
    }
}

/// Gini impurity `1 − Σ pᵢ²` of a class histogram.
pub fn gini(class_counts: &[u64]) -> Result<f64> {
    let total: u64 = class_counts.iter().sum();
    if total == 0 {
        return Err(Error::argument("gini of an empty histogram"));
    }
    let t = total as f64;
    Ok(1.0 - class_counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>())
}

/// Borrowed training rows: feature vectors with their labels.
#[derive(Debug, Clone, Copy)]
pub struct Samples<'a> {
    pub features: &'a [ChannelValues],
    pub labels: &'a [EmotionLabel],
}

impl<'a> Samples<'a> {
    pub fn new(features: &'a [ChannelValues], labels: &'a [EmotionLabel]) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::argument(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        Ok(Samples { features, labels })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub channel: ChannelId,
    pub threshold: f64,
    pub impurity_decrease: f64,
}

/// Relative margin a candidate must beat the incumbent by; anything closer is
/// a tie and the earlier (lower channel, lower threshold) candidate stays.
const TIE_TOLERANCE: f64 = 1e-12;

/// Best split of one channel from `(value, label)` pairs sorted by value.
///
/// Score is `Σ l_c²/n_l + Σ r_c²/n_r`; maximizing it maximizes the weighted
/// Gini decrease. Returns `(threshold, score)`.
fn scan_sorted(
    sorted: impl Iterator<Item = (f64, u8)>,
    totals: &[u64; EmotionLabel::COUNT],
    n: usize,
    min_leaf: usize,
) -> Option<(f64, f64)> {
    let mut left = [0u64; EmotionLabel::COUNT];
    let mut best: Option<(f64, f64)> = None;
    let mut iter = sorted.peekable();
    let mut n_left = 0usize;
    while let Some((value, label)) = iter.next() {
        left[label as usize] += 1;
        n_left += 1;
        let Some(&(next, _)) = iter.peek() else { break };
        if next <= value || n_left < min_leaf || n - n_left < min_leaf {
            continue;
        }
        let n_right = (n - n_left) as f64;
        let mut score = 0.0;
        for c in 0..EmotionLabel::COUNT {
            let r = (totals[c] - left[c]) as f64;
            score += (left[c] as f64).powi(2) / n_left as f64 + r * r / n_right;
        }
        if best.is_none_or(|(_, b)| score > b + TIE_TOLERANCE * b) {
            best = Some((midpoint(value, next), score));
        }
    }
    best
}

fn midpoint(a: f64, b: f64) -> f64 {
    let mid = a + (b - a) / 2.0;
    if mid < b && mid >= a {
        mid
    } else {
        a
    }
}

fn histogram(labels: impl Iterator<Item = u8>) -> [u64; EmotionLabel::COUNT] {
    let mut counts = [0u64; EmotionLabel::COUNT];
    for l in labels {
        counts[l as usize] += 1;
    }
    counts
}

fn to_decrease(score: f64, totals: &[u64; EmotionLabel::COUNT], n: usize) -> f64 {
    let n = n as f64;
    score / n - totals.iter().map(|&c| (c as f64).powi(2)).sum::<f64>() / (n * n)
}

/// Exhaustive best split over `candidates` (ties: lower channel index, then
/// lower threshold). `None` when the samples are pure or no candidate channel
/// has two distinct values.
pub fn best_split(samples: &Samples<'_>, candidates: &[ChannelId]) -> Option<Split> {
    best_split_with_min_leaf(samples, candidates, 1)
}

pub fn best_split_with_min_leaf(
    samples: &Samples<'_>,
    candidates: &[ChannelId],
    min_leaf: usize,
) -> Option<Split> {
    let n = samples.len();
    let labels: Vec<u8> = samples.labels.iter().map(|l| l.index() as u8).collect();
    let totals = histogram(labels.iter().copied());
    if totals.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    let mut channels = candidates.to_vec();
    channels.sort_unstable();
    channels.dedup();

    let mut best: Option<(ChannelId, f64, f64)> = None;
    let mut column: Vec<(f64, u8)> = Vec::with_capacity(n);
    for ch in channels {
        column.clear();
        column.extend(
            samples
                .features
                .iter()
                .zip(&labels)
                .map(|(f, &l)| (f[ch.index()], l)),
        );
        column.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((threshold, score)) = scan_sorted(column.iter().copied(), &totals, n, min_leaf) {
            if best.is_none_or(|(_, _, b)| score > b + TIE_TOLERANCE * b) {
                best = Some((ch, threshold, score));
            }
        }
    }
    best.map(|(channel, threshold, score)| Split {
        channel,
        threshold,
        impurity_decrease: to_decrease(score, &totals, n),
    })
}

/// Grows one tree over all `samples` (no resampling).
pub fn grow_tree(samples: &Samples<'_>, cfg: &TrainConfig, rng: &mut PinnedRng) -> Result<TreeNode> {
    if samples.is_empty() {
        return Err(Error::argument("cannot grow a tree from zero samples"));
    }
    let rows: Vec<u32> = (0..samples.len() as u32).collect();
    let labels: Vec<u8> = samples.labels.iter().map(|l| l.index() as u8).collect();
    Ok(grow_tree_on_rows(samples.features, &labels, &rows, cfg, rng))
}

/// Grows one tree over `rows` (indices into `features`/`labels`, duplicates
/// allowed, e.g. a bootstrap sample).
pub(crate) fn grow_tree_on_rows(
    features: &[ChannelValues],
    labels: &[u8],
    rows: &[u32],
    cfg: &TrainConfig,
    rng: &mut PinnedRng,
) -> TreeNode {
    let m = rows.len();
    // order[ch] lists positions 0..m sorted by that channel's value; every
    // node owns the same [lo, hi) range in all fourteen lists.
    let mut pairs: Vec<(f64, u32)> = Vec::with_capacity(m);
    let order: Vec<Vec<u32>> = (0..CHANNEL_COUNT)
        .map(|ch| {
            pairs.clear();
            pairs.extend(rows.iter().enumerate().map(|(p, &r)| (features[r as usize][ch], p as u32)));
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            pairs.iter().map(|&(_, p)| p).collect()
        })
        .collect();
    let mut builder = Builder {
        features,
        labels,
        rows,
        cfg,
        order,
        goes_left: vec![false; m],
        scratch: Vec::with_capacity(m),
    };
    builder.grow(0, m, 0, rng)
}

struct Builder<'a> {
    features: &'a [ChannelValues],
    labels: &'a [u8],
    rows: &'a [u32],
    cfg: &'a TrainConfig,
    order: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
}

impl Builder<'_> {
    fn value(&self, pos: u32, ch: usize) -> f64 {
        self.features[self.rows[pos as usize] as usize][ch]
    }

    fn label(&self, pos: u32) -> u8 {
        self.labels[self.rows[pos as usize] as usize]
    }

    fn grow(&mut self, lo: usize, hi: usize, depth: usize, rng: &mut PinnedRng) -> TreeNode {
        let n = hi - lo;
        let totals = histogram(self.order[0][lo..hi].iter().map(|&p| self.label(p)));
        let leaf = || TreeNode::Leaf {
            class_counts: totals.map(|c| c as u32),
        };
        let pure = totals.iter().filter(|&&c| c > 0).count() < 2;
        let depth_reached = self.cfg.max_depth.is_some_and(|d| depth >= d);
        let min_leaf = self.cfg.min_samples_leaf.max(1);
        if pure || depth_reached || n < 2 * min_leaf {
            return leaf();
        }

        let mut candidates: Vec<usize> = index::sample(rng, CHANNEL_COUNT, self.cfg.features_per_split).into_vec();
        candidates.sort_unstable();

        let mut best: Option<(usize, f64, f64)> = None;
        for &ch in &candidates {
            let column = self.order[ch][lo..hi].iter().map(|&p| (self.value(p, ch), self.label(p)));
            if let Some((threshold, score)) = scan_sorted(column, &totals, n, min_leaf) {
                if best.is_none_or(|(_, _, b)| score > b + TIE_TOLERANCE * b) {
                    best = Some((ch, threshold, score));
                }
            }
        }
        let Some((ch, threshold, _)) = best else {
            return leaf();
        };

        let mut n_left = 0;
        for i in lo..hi {
            let p = self.order[ch][i];
            let left = self.value(p, ch) <= threshold;
            self.goes_left[p as usize] = left;
            n_left += left as usize;
        }
        for c in 0..CHANNEL_COUNT {
            self.partition(c, lo, hi);
        }
        let mid = lo + n_left;
        let left = self.grow(lo, mid, depth + 1, rng);
        let right = self.grow(mid, hi, depth + 1, rng);
        TreeNode::Split {
            channel: ChannelId::ALL[ch],
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Stable partition of `order[ch][lo..hi]`: left-going positions first.
    fn partition(&mut self, ch: usize, lo: usize, hi: usize) {
        self.scratch.clear();
        let list = &mut self.order[ch];
        let mut w = lo;
        for i in lo..hi {
            let p = list[i];
            if self.goes_left[p as usize] {
                list[w] = p;
                w += 1;
            } else {
                self.scratch.push(p);
            }
        }
        list[w..hi].copy_from_slice(&self.scratch);
    }
}
