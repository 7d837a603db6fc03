//! One-vs-rest linear SVM over face embeddings.
//!
//! Each class gets a binary L2-regularised, squared-hinge separator trained
//! by dual coordinate descent. The bias is learned as the weight of a
//! constant `1` feature, so it is regularised together with the weights.
//! Prediction is the argmax of `w_k · x + b_k`, ties going to the earlier
//! class.

mod model_file;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Sample;

pub use self::model_file::{load_model, save_model, MODEL_FORMAT_VERSION, MODEL_MAGIC};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training data contains a single class `{0}`")]
    SingleClass(String),
    #[error("training data is empty")]
    EmptyDataset,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("model file I/O failed: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("unsupported or malformed model file: {0}")]
    FormatVersionMismatch(String),
    #[error("model file checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    ChecksumMismatch { stored: u32, computed: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Misclassification penalty.
    pub hyper_c: f64,
    /// Seeds the per-epoch shuffle of coordinate updates.
    pub seed: u64,
    pub max_epochs: usize,
    /// Training stops once no dual variable's projected gradient exceeds
    /// this in absolute value during a full epoch.
    pub tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hyper_c: 1.0,
            seed: 0,
            max_epochs: 1000,
            tolerance: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.hyper_c > 0.0 && self.hyper_c.is_finite()) {
            return Err(ClassifierError::InvalidConfig(format!(
                "hyper_c must be positive, got {}",
                self.hyper_c
            )));
        }
        if self.max_epochs == 0 {
            return Err(ClassifierError::InvalidConfig("max_epochs must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(ClassifierError::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// Result of one binary dual coordinate descent run.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// One dual variable per training sample.
    pub dual: Vec<f64>,
    pub epochs: usize,
    pub converged: bool,
    /// Largest |projected gradient| seen in the final epoch.
    pub max_violation: f64,
}

/// Row-major feature matrix with an implicit trailing bias column of ones.
struct Design<'a> {
    rows: Vec<&'a [f64]>,
    dim: usize,
}

impl Design<'_> {
    #[inline]
    fn dot(&self, w: &[f64], i: usize) -> f64 {
        let x = self.rows[i];
        x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + w[self.dim]
    }

    #[inline]
    fn axpy(&self, w: &mut [f64], i: usize, scale: f64) {
        for (wj, xj) in w.iter_mut().zip(self.rows[i]) {
            *wj += scale * xj;
        }
        w[self.dim] += scale;
    }
}

/// Trains a single squared-hinge separator; `targets` must be ±1.
///
/// Solves the dual `min ½ αᵀ(Q + I/2C)α − Σα, α ≥ 0` by cyclic coordinate
/// descent over a seeded random permutation per epoch.
pub fn fit_binary(
    features: &[&[f64]],
    targets: &[f64],
    cfg: &TrainConfig,
) -> Result<BinaryFit, ClassifierError> {
    cfg.validate()?;
    if features.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let dim = features[0].len();
    if let Some(bad) = features.iter().find(|x| x.len() != dim) {
        return Err(ClassifierError::DimensionMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }
    debug_assert_eq!(features.len(), targets.len());
    let design = Design {
        rows: features.to_vec(),
        dim,
    };
    let n = features.len();
    let diag = 0.5 / cfg.hyper_c;
    let qd: Vec<f64> = features
        .iter()
        .map(|x| x.iter().map(|v| v * v).sum::<f64>() + 1.0 + diag)
        .collect();

    let mut w = vec![0.0; dim + 1];
    let mut alpha = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut epochs = 0;
    let mut converged = false;
    let mut max_violation = f64::INFINITY;
    while epochs < cfg.max_epochs {
        epochs += 1;
        order.shuffle(&mut rng);
        max_violation = 0.0;
        for &i in &order {
            let yi = targets[i];
            let g = yi * design.dot(&w, i) - 1.0 + diag * alpha[i];
            let pg = if alpha[i] == 0.0 { g.min(0.0) } else { g };
            max_violation = max_violation.max(pg.abs());
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).max(0.0);
                design.axpy(&mut w, i, (alpha[i] - old) * yi);
            }
        }
        if max_violation < cfg.tolerance {
            converged = true;
            break;
        }
    }
    let bias = w.pop().expect("bias slot");
    Ok(BinaryFit {
        weights: w,
        bias,
        dual: alpha,
        epochs,
        converged,
        max_violation,
    })
}

/// A trained multiclass linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    classes: Vec<String>,
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
    hyper_c: f64,
    seed: u64,
}

impl SvmModel {
    /// Assembles a model from its parts, checking the shape invariants.
    pub fn from_parts(
        classes: Vec<String>,
        weights: Vec<Vec<f64>>,
        biases: Vec<f64>,
        hyper_c: f64,
        seed: u64,
    ) -> Result<Self, ClassifierError> {
        if classes.len() < 2 {
            return Err(ClassifierError::InvalidModel("at least two classes required".into()));
        }
        if weights.len() != classes.len() || biases.len() != classes.len() {
            return Err(ClassifierError::InvalidModel(format!(
                "{} classes but {} weight rows and {} biases",
                classes.len(),
                weights.len(),
                biases.len()
            )));
        }
        let dim = weights[0].len();
        if dim == 0 || weights.iter().any(|w| w.len() != dim) {
            return Err(ClassifierError::InvalidModel("weight rows differ in length".into()));
        }
        let mut sorted = classes.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != classes.len() {
            return Err(ClassifierError::InvalidModel("duplicate class labels".into()));
        }
        Ok(Self {
            classes,
            weights,
            biases,
            hyper_c,
            seed,
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn hyper_c(&self) -> f64 {
        self.hyper_c
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }

    /// `w_k · x + b_k` for every class, in class order.
    pub fn decision_scores(&self, x: &[f64]) -> Result<Vec<f64>, ClassifierError> {
        if x.len() != self.dim() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b)
            .collect())
    }

    /// Index of the winning class.
    pub fn predict_index(&self, x: &[f64]) -> Result<usize, ClassifierError> {
        let scores = self.decision_scores(x)?;
        Ok(argmax(&scores))
    }

    pub fn predict(&self, x: &[f64]) -> Result<&str, ClassifierError> {
        Ok(&self.classes[self.predict_index(x)?])
    }
}

/// First index of the maximum.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Trains one binary separator per class (class versus rest). Classes are
/// ordered by label.
pub fn train(data: &[Sample], cfg: &TrainConfig) -> Result<SvmModel, ClassifierError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let dim = data[0].features.len();
    if let Some(bad) = data.iter().find(|s| s.features.len() != dim) {
        return Err(ClassifierError::DimensionMismatch {
            expected: dim,
            actual: bad.features.len(),
        });
    }
    if dim == 0 {
        return Err(ClassifierError::DimensionMismatch {
            expected: 1,
            actual: 0,
        });
    }
    let mut classes: Vec<String> = data.iter().map(|s| s.label.clone()).collect();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(ClassifierError::SingleClass(classes.remove(0)));
    }

    let features: Vec<&[f64]> = data.iter().map(|s| s.features.as_slice()).collect();
    let mut weights = Vec::with_capacity(classes.len());
    let mut biases = Vec::with_capacity(classes.len());
    for class in &classes {
        let targets: Vec<f64> = data
            .iter()
            .map(|s| if &s.label == class { 1.0 } else { -1.0 })
            .collect();
        let fit = fit_binary(&features, &targets, cfg)?;
        if !fit.converged {
            log::warn!(
                "class `{class}`: no convergence after {} epochs (violation {:.3e})",
                fit.epochs,
                fit.max_violation
            );
        }
        weights.push(fit.weights);
        biases.push(fit.bias);
    }
    SvmModel::from_parts(classes, weights, biases, cfg.hyper_c, cfg.seed)
}
