use serde::{Deserialize, Serialize};

use super::{holdout_evaluation, EvalError, MetricsReport, SplitConfig};
use crate::classifier::TrainConfig;
use crate::dataset::LabeledDataset;

/// `a - b` for each reported metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDeltas {
    pub precision: f64,
    pub accuracy: f64,
    pub recall: f64,
    pub f1_score: f64,
}

impl MetricDeltas {
    pub fn between(a: &MetricsReport, b: &MetricsReport) -> Self {
        Self {
            precision: a.macro_precision - b.macro_precision,
            accuracy: a.accuracy - b.accuracy,
            recall: a.macro_recall - b.macro_recall,
            f1_score: a.macro_f1 - b.macro_f1,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.precision, self.accuracy, self.recall, self.f1_score]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub dataset_a: MetricsReport,
    pub dataset_b: MetricsReport,
    pub deltas: MetricDeltas,
    /// Non-fatal findings such as the two datasets differing in size.
    pub warnings: Vec<String>,
}

/// Runs the same split → train → test procedure, with the same seeds, on two
/// datasets and compares the outcomes.
pub fn bias_report(
    a: &LabeledDataset,
    b: &LabeledDataset,
    cfg: &SplitConfig,
    train_cfg: &TrainConfig,
) -> Result<BiasReport, EvalError> {
    let mut warnings = Vec::new();
    let (ca, cb) = (a.label_counts().len(), b.label_counts().len());
    if ca != cb {
        warnings.push(format!("SizeMismatch: {ca} classes in dataset A, {cb} in dataset B"));
    }
    if a.len() != b.len() {
        warnings.push(format!(
            "SizeMismatch: {} samples in dataset A, {} in dataset B",
            a.len(),
            b.len()
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let (_, _, ra) = holdout_evaluation(a, cfg, train_cfg)?;
    let (_, _, rb) = holdout_evaluation(b, cfg, train_cfg)?;
    Ok(BiasReport {
        deltas: MetricDeltas::between(&ra, &rb),
        dataset_a: ra,
        dataset_b: rb,
        warnings,
    })
}
