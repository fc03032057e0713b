use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::EmotionLabel;

/// Actual-by-predicted count grid over an ordered label set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<EmotionLabel>,
    /// `counts[actual][predicted]`, indexed by position in `labels`.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(labels: &[EmotionLabel]) -> Self {
        let mut labels = labels.to_vec();
        labels.sort_unstable();
        labels.dedup();
        let k = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn position(&self, label: EmotionLabel) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    pub fn get(&self, actual: EmotionLabel, predicted: EmotionLabel) -> u64 {
        match (self.position(actual), self.position(predicted)) {
            (Some(a), Some(p)) => self.counts[a][p],
            _ => 0,
        }
    }

    pub fn add(&mut self, actual: EmotionLabel, predicted: EmotionLabel) -> Result<()> {
        let a = self
            .position(actual)
            .ok_or_else(|| Error::argument(format!("label {actual} not in matrix")))?;
        let p = self
            .position(predicted)
            .ok_or_else(|| Error::argument(format!("label {predicted} not in matrix")))?;
        self.counts[a][p] += 1;
        Ok(())
    }

    pub fn row_sum(&self, actual: usize) -> u64 {
        self.counts[actual].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Trace over total.
    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.total() as f64
    }

    /// Parses `class,<label>...[,accuracy]` rows; a trailing accuracy column
    /// (e.g. `97.21%`) is accepted and ignored.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::Format("empty confusion matrix".into()))?
            .split(',')
            .map(str::trim)
            .collect();
        if header.first() != Some(&"class") {
            return Err(Error::Format("first column must be `class`".into()));
        }
        let mut cols: Vec<&str> = header[1..].to_vec();
        if cols.last() == Some(&"accuracy") {
            cols.pop();
        }
        let labels = cols
            .iter()
            .map(|s| s.parse::<EmotionLabel>())
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Format(e.to_string()))?;
        let mut m = ConfusionMatrix::zeros(&labels);
        if m.labels != labels {
            return Err(Error::Format("labels must be distinct and in canonical order".into()));
        }
        let mut seen = vec![false; labels.len()];
        for (i, line) in lines.enumerate() {
            let row = i + 1;
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let actual: EmotionLabel = fields[0].parse().map_err(|_| Error::Parse {
                row,
                message: format!("unknown class {:?}", fields[0]),
            })?;
            let a = m.position(actual).ok_or_else(|| Error::Parse {
                row,
                message: format!("class {actual} not among the columns"),
            })?;
            if fields.len() < labels.len() + 1 {
                return Err(Error::Parse {
                    row,
                    message: "too few count columns".into(),
                });
            }
            for (p, raw) in fields[1..=labels.len()].iter().enumerate() {
                m.counts[a][p] = raw.parse().map_err(|_| Error::Parse {
                    row,
                    message: format!("invalid count {raw:?}"),
                })?;
            }
            seen[a] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Format(format!("missing row for {}", labels[missing])));
        }
        Ok(m)
    }

    /// `class,<labels...>,accuracy` with per-class accuracy as a fraction.
    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<f64>> = self
            .counts
            .iter()
            .map(|r| r.iter().map(|&c| c as f64).collect())
            .collect();
        grid_csv(&self.labels, &rows, |v| format!("{v}"))
    }
}

fn grid_csv(labels: &[EmotionLabel], rows: &[Vec<f64>], fmt: impl Fn(f64) -> String) -> String {
    let mut out = String::from("class");
    for l in labels {
        let _ = write!(out, ",{l}");
    }
    out.push_str(",accuracy\n");
    for (i, (label, row)) in labels.iter().zip(rows).enumerate() {
        let sum: f64 = row.iter().sum();
        let _ = write!(out, "{label}");
        for v in row {
            let _ = write!(out, ",{}", fmt(*v));
        }
        let acc = if sum > 0.0 { row[i] / sum } else { f64::NAN };
        let _ = writeln!(out, ",{acc:.6}");
    }
    out
}

/// Element-wise mean of several confusion matrices over the same labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanConfusion {
    pub labels: Vec<EmotionLabel>,
    pub means: Vec<Vec<f64>>,
}

impl MeanConfusion {
    pub fn from_matrices(matrices: &[ConfusionMatrix]) -> Result<Self> {
        let first = matrices
            .first()
            .ok_or_else(|| Error::argument("no matrices to average"))?;
        if matrices.iter().any(|m| m.labels != first.labels) {
            return Err(Error::argument("matrices have different label sets"));
        }
        let k = first.labels.len();
        let n = matrices.len() as f64;
        let means = (0..k)
            .map(|a| {
                (0..k)
                    .map(|p| matrices.iter().map(|m| m.counts[a][p] as f64).sum::<f64>() / n)
                    .collect()
            })
            .collect();
        Ok(MeanConfusion {
            labels: first.labels.clone(),
            means,
        })
    }

    pub fn per_class_accuracy(&self) -> Result<BTreeMap<EmotionLabel, f64>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let sum: f64 = self.means[i].iter().sum();
                if sum <= 0.0 {
                    return Err(Error::argument(format!("row {l} is empty")));
                }
                Ok((l, self.means[i][i] / sum))
            })
            .collect()
    }

    /// Same layout as [`ConfusionMatrix::to_csv`]; means are rounded to whole
    /// counts for display only.
    pub fn to_csv(&self) -> String {
        grid_csv(&self.labels, &self.means, |v| format!("{}", v.round()))
    }
}

/// Tallies `counts[actual][predicted]` over the labels present in either list.
pub fn confusion(predictions: &[EmotionLabel], actuals: &[EmotionLabel]) -> Result<ConfusionMatrix> {
    let labels: Vec<EmotionLabel> = predictions.iter().chain(actuals).copied().collect();
    confusion_with_labels(predictions, actuals, &labels)
}

pub fn confusion_with_labels(
    predictions: &[EmotionLabel],
    actuals: &[EmotionLabel],
    labels: &[EmotionLabel],
) -> Result<ConfusionMatrix> {
    if predictions.len() != actuals.len() {
        return Err(Error::argument(format!(
            "{} predictions but {} actuals",
            predictions.len(),
            actuals.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::argument("confusion of zero samples"));
    }
    let mut m = ConfusionMatrix::zeros(labels);
    for (&p, &a) in predictions.iter().zip(actuals) {
        m.add(a, p)?;
    }
    Ok(m)
}

/// Row-normalized diagonal: `counts[c][c] / Σ_p counts[c][p]`.
pub fn per_class_accuracy(m: &ConfusionMatrix) -> Result<BTreeMap<EmotionLabel, f64>> {
    m.labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let sum = m.row_sum(i);
            if sum == 0 {
                return Err(Error::argument(format!("row {l} is empty")));
            }
            Ok((l, m.counts[i][i] as f64 / sum as f64))
        })
        .collect()
}

/// One-vs-rest ROC AUC as the Mann–Whitney statistic: the probability a
/// positive outscores a negative, ties counting one half. Uses midranks.
pub fn auc_one_vs_rest(scores: &[f64], positives: &[bool]) -> Result<f64> {
    if scores.len() != positives.len() {
        return Err(Error::argument(format!(
            "{} scores but {} positive flags",
            scores.len(),
            positives.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::argument("AUC scores must not be NaN"));
    }
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::argument("AUC needs at least one positive and one negative"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their average.
        let midrank = (i + j + 2) as f64 / 2.0;
        rank_sum_pos += midrank * order[i..=j].iter().filter(|&&k| positives[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}
