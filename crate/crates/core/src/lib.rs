//! Face-recognition authentication pipeline.
//!
//! The crate is organised along the data flow of a login request:
//!
//! * [`imaging`] decodes browser data URIs and prepares pixel data,
//! * [`detector`] runs the three-stage cascade (proposal, refine, output)
//!   over an image pyramid and returns face boxes with five landmarks,
//! * [`embedder`] maps a 160×160 face crop to a unit-norm 512-d embedding,
//! * [`classifier`] trains and applies a one-vs-rest linear SVM over
//!   embeddings,
//! * [`evaluation`] splits datasets, cross-validates and reports metrics,
//! * [`auth`] wires everything into an enrollment / login / verification
//!   service with encrypted per-user codes,
//! * [`pipeline`] holds the operator workflows behind the `faceauth` binary.
//!
//! Network weights are abstracted behind [`detector::StageBackend`] and
//! [`embedder::EmbedderBackend`]; the deterministic backends in
//! [`detector::synthetic`] and [`embedder::MockBackend`] let the whole stack
//! run without model files.

pub mod auth;
pub mod classifier;
pub mod config;
pub mod dataset;
pub mod detector;
pub mod embedder;
pub mod evaluation;
pub mod geometry;
pub mod imaging;
pub mod pipeline;
pub mod synth;

pub use classifier::{SvmModel, TrainConfig};
pub use dataset::{LabeledDataset, Sample};
pub use detector::{BoundingBox, Detection, DetectorConfig};
pub use embedder::{Embedding, EMBEDDING_DIM};
pub use imaging::{Image, Tensor};
