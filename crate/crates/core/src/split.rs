//! Seeded train/test partitioning and subsampling.

use rand::seq::{index, SliceRandom};

use crate::error::{Error, Result};
use crate::rng;
use crate::signal::Dataset;

/// Train/test index partition of `0..n`, each side in ascending order.
///
/// `train.len() == round(train_fraction · n)`; the selection is a uniform
/// random subset (no stratification).
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::argument(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let n_train = (train_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Splits `ds` into (train, test). Record order within each side follows the
/// original dataset order.
pub fn random_split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if ds.is_empty() {
        return Err(Error::argument("cannot split an empty dataset"));
    }
    let (train, test) = split_indices(ds.len(), train_fraction, seed)?;
    let pick = |idx: &[usize]| ds.with_records(idx.iter().map(|&i| ds.records[i].clone()).collect());
    Ok((pick(&train), pick(&test)))
}

/// Uniform sample of `n` records without replacement, in sampled order.
pub fn sample_subset(ds: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n > ds.len() {
        return Err(Error::argument(format!(
            "cannot sample {n} records from a dataset of {}",
            ds.len()
        )));
    }
    let picked = index::sample(&mut rng::seeded(seed), ds.len(), n);
    Ok(ds.with_records(picked.iter().map(|i| ds.records[i].clone()).collect()))
}
