//! Face embeddings: 160×160 RGB crop in, unit-norm 512-d vector out.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{self, Image, Tensor};

pub const EMBEDDING_DIM: usize = 512;
pub const FACE_SIZE: u32 = 160;
const INPUT_LEN: usize = (FACE_SIZE * FACE_SIZE * 3) as usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("face crop must be {FACE_SIZE}x{FACE_SIZE}x3, got {width}x{height}x3")]
    WrongShape { width: u32, height: u32 },
    #[error("embedding backend failed: {0}")]
    BackendFailure(String),
    #[error("item {index}: {source}")]
    Item {
        index: usize,
        #[source]
        source: Box<EmbedError>,
    },
}

/// A unit-norm 512-d face descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// L2-normalises raw backend output.
    pub fn from_raw(raw: Vec<f64>) -> Result<Self, EmbedError> {
        if raw.len() != EMBEDDING_DIM {
            return Err(EmbedError::BackendFailure(format!(
                "expected {EMBEDDING_DIM} outputs, got {}",
                raw.len()
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::BackendFailure("non-finite output".into()));
        }
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(EmbedError::BackendFailure("all-zero output".into()));
        }
        Ok(Self(raw.into_iter().map(|v| v / norm).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = EmbedError;

    /// Accepts an already-normalised vector as is.
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        if v.len() != EMBEDDING_DIM || v.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::BackendFailure(format!(
                "stored embedding must hold {EMBEDDING_DIM} finite values"
            )));
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-5 {
            return Err(EmbedError::BackendFailure(format!(
                "stored embedding has norm {norm}"
            )));
        }
        Ok(Self(v))
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

/// Identifies the network behind a backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub name: String,
    pub training_set: String,
    pub architecture: String,
}

impl ModelDescriptor {
    /// The pretrained FaceNet release the pipeline is designed around.
    pub fn facenet_vggface2() -> Self {
        Self {
            name: "20180402-114759".into(),
            training_set: "VGGFace2".into(),
            architecture: "Inception ResNet v1".into(),
        }
    }
}

/// A network mapping a prewhitened `[160, 160, 3]` tensor to 512 raw values.
pub trait EmbedderBackend: Send + Sync {
    fn forward(&self, input: &Tensor) -> Result<Vec<f64>, EmbedError>;
    fn descriptor(&self) -> ModelDescriptor;
}

/// Deterministic linear stand-in for the pretrained model.
///
/// Output row `r` is `sum_k w[r,k] * x[col[r,k]]` over a fixed set of
/// [`MockBackend::TAPS_PER_ROW`] seeded random input positions with
/// Rademacher weights, i.e. a sparse random projection from 76 800 inputs to
/// 512 outputs. The same seed always yields the same projection.
#[derive(Debug, Clone)]
pub struct MockBackend {
    seed: u64,
    columns: Vec<u32>,
    weights: Vec<f32>,
}

impl MockBackend {
    pub const TAPS_PER_ROW: usize = 1024;

    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = EMBEDDING_DIM * Self::TAPS_PER_ROW;
        let mut columns = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for _ in 0..n {
            columns.push(rng.random_range(0..INPUT_LEN as u32));
            weights.push(if rng.random::<bool>() { 1.0 } else { -1.0 });
        }
        Self {
            seed,
            columns,
            weights,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl EmbedderBackend for MockBackend {
    fn forward(&self, input: &Tensor) -> Result<Vec<f64>, EmbedError> {
        if input.values().len() != INPUT_LEN {
            return Err(EmbedError::BackendFailure(format!(
                "mock backend expects {INPUT_LEN} inputs, got {}",
                input.values().len()
            )));
        }
        let x = input.values();
        Ok(self
            .columns
            .chunks_exact(Self::TAPS_PER_ROW)
            .zip(self.weights.chunks_exact(Self::TAPS_PER_ROW))
            .map(|(cols, ws)| {
                cols.iter()
                    .zip(ws)
                    .map(|(&c, &w)| (w * x[c as usize]) as f64)
                    .sum()
            })
            .collect())
    }

    fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor {
            name: format!("mock-projection-{}", self.seed),
            training_set: "none".into(),
            architecture: "sparse random projection".into(),
        }
    }
}

/// Prewhitens `face`, runs the backend and L2-normalises the result.
pub fn embed(face: &Image, backend: &dyn EmbedderBackend) -> Result<Embedding, EmbedError> {
    if face.width() != FACE_SIZE || face.height() != FACE_SIZE {
        return Err(EmbedError::WrongShape {
            width: face.width(),
            height: face.height(),
        });
    }
    let raw = backend.forward(&imaging::prewhiten(face))?;
    Embedding::from_raw(raw)
}

/// Embeds every face, keeping order and labels. Errors carry the index of
/// the failing item.
pub fn embed_dataset<L: Clone>(
    faces: &[(Image, L)],
    backend: &dyn EmbedderBackend,
) -> Result<Vec<(Embedding, L)>, EmbedError> {
    faces
        .iter()
        .enumerate()
        .map(|(index, (img, label))| {
            embed(img, backend)
                .map(|e| (e, label.clone()))
                .map_err(|e| EmbedError::Item {
                    index,
                    source: Box::new(e),
                })
        })
        .collect()
}
