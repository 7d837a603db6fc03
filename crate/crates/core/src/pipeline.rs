//! Operator workflows behind the `faceauth` binary: dataset ingestion,
//! embedding, training, evaluation, bias audit and model export.
//!
//! Every output is a deterministic function of inputs and seeds; wall-clock
//! timings go to a separate `timing.json` so the reports themselves can be
//! compared byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{self, ClassifierError, SvmModel, TrainConfig};
use crate::dataset::{LabeledDataset, Sample};
use crate::detector::{align_face, DetectError, FaceDetector};
use crate::embedder::{embed_dataset, EmbedError, EmbedderBackend, Embedding, FACE_SIZE};
use crate::evaluation::{
    self, bias_report, normalize_confusion, report, BiasReport, CrossValidation, EvalError, MetricsReport,
    SplitConfig,
};
use crate::imaging::{Image, ImagingError};
use crate::synth::{face_photo, IdentityTexture};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FACES_DIR: &str = "faces";
const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no images found under {0}")]
    EmptyDataset(PathBuf),
    #[error("{path}: {detail}")]
    Malformed { path: PathBuf, detail: String },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    }
    std::fs::write(path, contents).map_err(io_at(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    write_file(path, text)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let bytes = std::fs::read(path).map_err(io_at(path))?;
    serde_json::from_slice(&bytes).map_err(|e| PipelineError::Malformed {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageStatus {
    Ok,
    NoFace,
    MultiFace,
    DecodeError,
}

/// What to do with an image in which several faces are detected.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum MultiFacePolicy {
    /// Keep the highest-confidence face.
    #[default]
    Highest,
    /// Skip the image and record it as `multi_face`.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    /// Path relative to the dataset root.
    pub source: String,
    pub label: String,
    pub status: ImageStatus,
    pub faces_found: usize,
    /// Crop path relative to the archive directory.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub crop: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: String,
    pub labels: Vec<String>,
    pub images: Vec<ImageEntry>,
}

impl DatasetManifest {
    pub fn count(&self, status: ImageStatus) -> usize {
        self.images.iter().filter(|e| e.status == status).count()
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_at(dir))? {
        out.push(entry.map_err(io_at(dir))?.path());
    }
    out.sort();
    Ok(out)
}

fn is_image(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false)
}

/// Detects, crops and resizes the face in every image of a
/// folder-per-identity dataset, writing `faces/<label>/<stem>.png` and
/// `manifest.json` into `archive`. Previous crops in `archive` are replaced.
pub fn ingest(
    root: &Path,
    archive: &Path,
    detector: &dyn FaceDetector,
    policy: MultiFacePolicy,
) -> Result<DatasetManifest, PipelineError> {
    let mut labels = Vec::new();
    let mut jobs = Vec::new();
    for dir in sorted_entries(root)? {
        if !dir.is_dir() {
            continue;
        }
        let label = dir.file_name().expect("read_dir entry").to_string_lossy().into_owned();
        let images: Vec<PathBuf> = sorted_entries(&dir)?.into_iter().filter(|p| is_image(p)).collect();
        if images.is_empty() {
            continue;
        }
        labels.push(label.clone());
        jobs.extend(images.into_iter().map(|p| (label.clone(), p)));
    }
    if jobs.is_empty() {
        return Err(PipelineError::EmptyDataset(root.to_path_buf()));
    }

    let faces_dir = archive.join(FACES_DIR);
    if faces_dir.exists() {
        std::fs::remove_dir_all(&faces_dir).map_err(io_at(&faces_dir))?;
    }
    let mut images = Vec::with_capacity(jobs.len());
    for (label, path) in jobs {
        let source = path
            .strip_prefix(root)
            .unwrap_or(&path)
            .to_string_lossy()
            .replace('\\', "/");
        let mut entry = ImageEntry {
            source,
            label: label.clone(),
            status: ImageStatus::Ok,
            faces_found: 0,
            crop: None,
        };
        let bytes = std::fs::read(&path).map_err(io_at(&path))?;
        let Ok(img) = Image::decode(&bytes) else {
            entry.status = ImageStatus::DecodeError;
            log::warn!("{}: cannot decode", path.display());
            images.push(entry);
            continue;
        };
        let faces = match detector.detect(&img) {
            Ok(f) => f,
            Err(DetectError::ImageTooSmall { .. }) => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        entry.faces_found = faces.len();
        entry.status = match (faces.len(), policy) {
            (0, _) => ImageStatus::NoFace,
            (1, _) | (_, MultiFacePolicy::Highest) => ImageStatus::Ok,
            (_, MultiFacePolicy::Skip) => ImageStatus::MultiFace,
        };
        if entry.status == ImageStatus::Ok {
            let crop = align_face(&img, &faces[0], FACE_SIZE)?;
            let stem = path.file_stem().expect("image file").to_string_lossy();
            let rel = format!("{FACES_DIR}/{label}/{stem}.png");
            write_file(&archive.join(&rel), crop.encode_png()?)?;
            entry.crop = Some(rel);
        } else {
            log::info!("{}: skipped ({:?})", path.display(), entry.status);
        }
        images.push(entry);
    }
    let manifest = DatasetManifest {
        root: root.to_string_lossy().into_owned(),
        labels,
        images,
    };
    write_json(&archive.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Loads the crops of an ingested archive in manifest order.
pub fn load_archive(archive: &Path) -> Result<Vec<(Image, String)>, PipelineError> {
    let manifest: DatasetManifest = read_json(&archive.join(MANIFEST_FILE))?;
    let mut out = Vec::new();
    for entry in manifest.images {
        if let Some(rel) = entry.crop {
            let path = archive.join(rel);
            let bytes = std::fs::read(&path).map_err(io_at(&path))?;
            out.push((Image::decode(&bytes)?, entry.label));
        }
    }
    if out.is_empty() {
        return Err(PipelineError::EmptyDataset(archive.to_path_buf()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub label: String,
    pub embedding: Embedding,
}

pub fn embed_archive(archive: &Path, embedder: &dyn EmbedderBackend) -> Result<Vec<EmbeddingRecord>, PipelineError> {
    let faces = load_archive(archive)?;
    Ok(embed_dataset(&faces, embedder)?
        .into_iter()
        .map(|(embedding, label)| EmbeddingRecord { label, embedding })
        .collect())
}

pub fn to_dataset(records: &[EmbeddingRecord]) -> LabeledDataset {
    records
        .iter()
        .map(|r| Sample::new(r.embedding.as_slice().to_vec(), r.label.clone()))
        .collect()
}

pub fn write_embeddings(path: &Path, records: &[EmbeddingRecord]) -> Result<(), PipelineError> {
    write_json(path, &records)
}

/// Reads either an embeddings JSON file or an ingested archive directory
/// (embedding its crops on the fly).
pub fn load_dataset(input: &Path, embedder: &dyn EmbedderBackend) -> Result<LabeledDataset, PipelineError> {
    let records: Vec<EmbeddingRecord> = if input.is_dir() {
        embed_archive(input, embedder)?
    } else {
        read_json(input)?
    };
    if records.is_empty() {
        return Err(PipelineError::EmptyDataset(input.to_path_buf()));
    }
    Ok(to_dataset(&records))
}

/// Cross-validation of the training portion of a hold-out experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPartCrossValidation {
    pub folds_requested: usize,
    pub folds_used: usize,
    #[serde(flatten)]
    pub result: CrossValidation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub train_size: usize,
    pub test_size: usize,
    pub metrics: MetricsReport,
    pub cross_validation: Option<TrainPartCrossValidation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Timing {
    stage: &'static str,
    seconds: f64,
}

/// Split → train → test → metrics, plus k-fold cross-validation on the
/// training portion. Writes `metrics.txt`, `metrics.json`, `per_class.csv`,
/// `confusion.csv`, `confusion_normalized.csv`, `cv.csv` and `timing.json`
/// into `out`.
///
/// When a class has fewer training samples than `split.folds`, the fold
/// count is lowered to the smallest class size (at least 2, otherwise the
/// cross-validation is skipped).
pub fn run_experiment(
    data: &LabeledDataset,
    split: &SplitConfig,
    train_cfg: &TrainConfig,
    out: &Path,
) -> Result<ExperimentReport, PipelineError> {
    let t0 = Instant::now();
    let (parts, _model, metrics) = evaluation::holdout_evaluation(data, split, train_cfg)?;
    let holdout_secs = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let train_part = data.subset(&parts.train);
    let smallest = train_part.label_counts().values().copied().min().unwrap_or(0);
    let folds_used = split.folds.min(smallest);
    let cross_validation = if folds_used >= 2 {
        if folds_used < split.folds {
            log::warn!(
                "smallest training class has {smallest} samples; cross-validating with {folds_used} folds instead of {}",
                split.folds
            );
        }
        let cfg = SplitConfig {
            folds: folds_used,
            ..split.clone()
        };
        Some(TrainPartCrossValidation {
            folds_requested: split.folds,
            folds_used,
            result: evaluation::cross_validate(&train_part, &cfg, train_cfg)?,
        })
    } else {
        log::warn!("training classes too small for cross-validation");
        None
    };
    let cv_secs = t1.elapsed().as_secs_f64();

    let report = ExperimentReport {
        train_size: parts.train.len(),
        test_size: parts.test.len(),
        metrics,
        cross_validation,
    };
    let m = &report.metrics;
    write_file(&out.join("metrics.txt"), report::metrics_table(&[("LinearSVC", m)]))?;
    write_json(&out.join("metrics.json"), &report)?;
    write_file(&out.join("per_class.csv"), report::per_class_table(m))?;
    write_file(&out.join("confusion.csv"), report::confusion_csv(&m.classes, &m.confusion))?;
    let normalized = normalize_confusion(&m.confusion, &m.classes)?;
    write_file(
        &out.join("confusion_normalized.csv"),
        report::normalized_confusion_csv(&m.classes, &normalized),
    )?;
    let cv_text = match &report.cross_validation {
        Some(cv) => report::cross_validation_csv(&cv.result),
        None => "fold,accuracy\n".to_string(),
    };
    write_file(&out.join("cv.csv"), cv_text)?;
    write_json(
        &out.join("timing.json"),
        &[
            Timing {
                stage: "holdout",
                seconds: holdout_secs,
            },
            Timing {
                stage: "cross_validation",
                seconds: cv_secs,
            },
        ],
    )?;
    Ok(report)
}

/// Full-dataset k-fold cross-validation; writes `cv.csv` and `cv.json`.
pub fn run_cross_validation(
    data: &LabeledDataset,
    split: &SplitConfig,
    train_cfg: &TrainConfig,
    out: &Path,
) -> Result<CrossValidation, PipelineError> {
    let cv = evaluation::cross_validate(data, split, train_cfg)?;
    write_file(&out.join("cv.csv"), report::cross_validation_csv(&cv))?;
    write_json(&out.join("cv.json"), &cv)?;
    Ok(cv)
}

/// Paired evaluation of two datasets; writes `bias.txt` and `bias.json`.
pub fn run_bias_audit(
    a: &LabeledDataset,
    b: &LabeledDataset,
    names: (&str, &str),
    split: &SplitConfig,
    train_cfg: &TrainConfig,
    out: &Path,
) -> Result<BiasReport, PipelineError> {
    let report = bias_report(a, b, split, train_cfg)?;
    write_file(&out.join("bias.txt"), report::bias_table(&report, names.0, names.1))?;
    write_json(&out.join("bias.json"), &report)?;
    Ok(report)
}

pub fn train_model(data: &LabeledDataset, train_cfg: &TrainConfig, path: &Path) -> Result<SvmModel, PipelineError> {
    let model = classifier::train(&data.samples, train_cfg)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    }
    classifier::save_model(&model, path)?;
    Ok(model)
}

/// Self-describing JSON rendering of a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelExport {
    pub format_version: u16,
    pub hyper_c: f64,
    pub seed: u64,
    pub dim: usize,
    pub classes: BTreeMap<String, ClassWeights>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub bias: f64,
    pub weights: Vec<f64>,
}

pub fn export_model(model_path: &Path, out: &Path) -> Result<ModelExport, PipelineError> {
    let model = classifier::load_model(model_path)?;
    let export = ModelExport {
        format_version: classifier::MODEL_FORMAT_VERSION,
        hyper_c: model.hyper_c(),
        seed: model.seed(),
        dim: model.dim(),
        classes: model
            .classes()
            .iter()
            .zip(model.weights())
            .zip(model.biases())
            .map(|((label, w), b)| {
                (
                    label.clone(),
                    ClassWeights {
                        bias: *b,
                        weights: w.clone(),
                    },
                )
            })
            .collect(),
    };
    write_json(out, &export)?;
    Ok(export)
}

/// Writes a folder-per-identity dataset of synthetic face photos:
/// `<root>/id<NN>/<MM>.png`. Identity `i` uses texture seed
/// `seed * 1000 + i`.
pub fn write_synthetic_dataset(
    root: &Path,
    identities: usize,
    per_identity: usize,
    canvas: u32,
    seed: u64,
) -> Result<(), PipelineError> {
    for i in 0..identities {
        let texture = IdentityTexture::from_seed(seed.wrapping_mul(1000).wrapping_add(i as u64));
        for j in 0..per_identity {
            let (img, _) = face_photo(&texture, (i * per_identity + j) as u64, canvas);
            write_file(&root.join(format!("id{i:02}")).join(format!("{j:02}.png")), img.encode_png()?)?;
        }
    }
    Ok(())
}
