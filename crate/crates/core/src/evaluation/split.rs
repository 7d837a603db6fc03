use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvalError, SplitConfig};
use crate::dataset::LabeledDataset;

/// Train/test partition as sorted sample indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One cross-validation fold as sorted sample indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Test samples drawn from a class of `count`: `count * fraction` rounded
/// half up, at least one, and never the whole class.
pub fn test_count(count: usize, fraction: f64) -> usize {
    // the epsilon keeps products like 5 * 0.3 = 1.4999999999999998 on the
    // half-up side
    let rounded = (count as f64 * fraction + 0.5 + 1e-9).floor() as usize;
    rounded.max(1).min(count.saturating_sub(1))
}

/// Per-class seeded shuffle; the first [`test_count`] of each class go to
/// the test part.
pub fn stratified_split(data: &LabeledDataset, cfg: &SplitConfig) -> Result<Split, EvalError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, mut idx) in data.indices_by_label() {
        if idx.len() < 2 {
            return Err(EvalError::ClassTooSmall {
                label: label.to_string(),
                count: idx.len(),
                needed: 2,
            });
        }
        idx.shuffle(&mut rng);
        let n_test = test_count(idx.len(), cfg.test_fraction);
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

/// Stratified k-fold assignment. Each class is shuffled and dealt
/// round-robin across folds, continuing where the previous class stopped so
/// that fold sizes stay within one of each other as well.
pub fn stratified_kfold(data: &LabeledDataset, cfg: &SplitConfig) -> Result<Vec<Fold>, EvalError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let k = cfg.folds;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut assignment = vec![0usize; data.len()];
    let mut offset = 0usize;
    for (label, mut idx) in data.indices_by_label() {
        if idx.len() < k {
            return Err(EvalError::ClassTooSmall {
                label: label.to_string(),
                count: idx.len(),
                needed: k,
            });
        }
        idx.shuffle(&mut rng);
        for (j, &i) in idx.iter().enumerate() {
            assignment[i] = (offset + j) % k;
        }
        offset = (offset + idx.len()) % k;
    }
    Ok((0..k)
        .map(|f| {
            let (validation, train): (Vec<usize>, Vec<usize>) =
                (0..data.len()).partition(|&i| assignment[i] == f);
            Fold { train, validation }
        })
        .collect())
}
