//! Dataset splitting, cross-validation, metrics and the paired bias audit.

mod bias;
mod metrics;
pub mod report;
mod split;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{self, ClassifierError, TrainConfig};
use crate::dataset::LabeledDataset;

pub use self::bias::{bias_report, BiasReport, MetricDeltas};
pub use self::metrics::{compute_metrics, normalize_confusion, ClassStats, MetricsReport};
pub use self::split::{stratified_kfold, stratified_split, test_count, Fold, Split};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("class `{label}` has {count} samples, needs at least {needed}")]
    ClassTooSmall {
        label: String,
        count: usize,
        needed: usize,
    },
    #[error("label vectors differ in length ({truth} vs {predicted})")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("no labels to evaluate")]
    EmptyInput,
    #[error("confusion row for `{0}` is all zero")]
    EmptyRow(String),
    #[error("invalid split configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// Fraction of each class held out for testing.
    pub test_fraction: f64,
    /// Number of cross-validation folds.
    pub folds: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.30,
            folds: 10,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(EvalError::InvalidConfig(format!(
                "test_fraction {} not in (0, 1)",
                self.test_fraction
            )));
        }
        if self.folds < 2 {
            return Err(EvalError::InvalidConfig(format!(
                "folds must be at least 2, got {}",
                self.folds
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

/// Trains a fresh model on each fold's training part and scores it on the
/// held-out part.
pub fn cross_validate(
    data: &LabeledDataset,
    cfg: &SplitConfig,
    train_cfg: &TrainConfig,
) -> Result<CrossValidation, EvalError> {
    let folds = stratified_kfold(data, cfg)?;
    let mut fold_accuracies = Vec::with_capacity(folds.len());
    for fold in &folds {
        let train = data.subset(&fold.train);
        let model = classifier::train(&train.samples, train_cfg)?;
        let mut correct = 0usize;
        for &i in &fold.validation {
            let s = &data.samples[i];
            if model.predict(&s.features)? == s.label {
                correct += 1;
            }
        }
        fold_accuracies.push(correct as f64 / fold.validation.len() as f64);
    }
    let mean_accuracy = fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
    Ok(CrossValidation {
        fold_accuracies,
        mean_accuracy,
    })
}

/// Split → train → predict on the test part → metrics.
pub fn holdout_evaluation(
    data: &LabeledDataset,
    cfg: &SplitConfig,
    train_cfg: &TrainConfig,
) -> Result<(Split, classifier::SvmModel, MetricsReport), EvalError> {
    let split = stratified_split(data, cfg)?;
    let train = data.subset(&split.train);
    let model = classifier::train(&train.samples, train_cfg)?;
    let mut truth = Vec::with_capacity(split.test.len());
    let mut predicted = Vec::with_capacity(split.test.len());
    for &i in &split.test {
        let s = &data.samples[i];
        truth.push(s.label.clone());
        predicted.push(model.predict(&s.features)?.to_string());
    }
    let report = compute_metrics(&truth, &predicted)?;
    Ok((split, model, report))
}
