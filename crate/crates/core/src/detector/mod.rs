//! Three-stage cascaded face detection.
//!
//! The cascade logic lives here; the networks themselves sit behind
//! [`StageBackend`]. Stage inputs are normalised as `(x - 127.5) / 128`
//! in HWC layout:
//!
//! 1. the proposal stage scans every pyramid level and yields a probability
//!    map plus a 4-channel regression map,
//! 2. the refine stage scores 24×24 crops of the surviving windows,
//! 3. the output stage scores 48×48 crops and predicts five landmarks.

mod nms;
mod proposal;
pub mod synthetic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::nms::{iou, nms, overlap, OverlapMode};
pub use self::proposal::{build_pyramid, generate_candidates, Candidate, PROPOSAL_CELL, PROPOSAL_STRIDE};
pub use crate::geometry::BoundingBox;
use crate::imaging::{self, Image, ImagingError, Tensor};

pub const REFINE_INPUT: u32 = 24;
pub const OUTPUT_INPUT: u32 = 48;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("image {width}x{height} is smaller than the minimum face size {min_face_size}")]
    ImageTooSmall {
        width: u32,
        height: u32,
        min_face_size: f64,
    },
    #[error("bounding box regression produced a degenerate box")]
    DegenerateBox,
    #[error("invalid detector configuration: {0}")]
    InvalidConfig(String),
    #[error("detector backend failed: {0}")]
    Backend(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// Tunables of the cascade. Defaults follow the reference MTCNN settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Smallest face side, in pixels, the pyramid is built to find.
    pub min_face_size: f64,
    /// Ratio between consecutive pyramid scales.
    pub scale_factor: f64,
    /// Acceptance probability for the proposal, refine and output stages.
    pub thresholds: [f64; 3],
    /// IoU threshold for suppression within one pyramid level.
    pub nms_intra: f64,
    /// IoU threshold for suppression across levels and between stages.
    pub nms_cross: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            min_face_size: 20.0,
            scale_factor: 0.709,
            thresholds: [0.6, 0.7, 0.7],
            nms_intra: 0.5,
            nms_cross: 0.7,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        let bad = |msg: String| Err(DetectError::InvalidConfig(msg));
        if !(self.scale_factor > 0.0 && self.scale_factor < 1.0) {
            return bad(format!("scale_factor {} not in (0, 1)", self.scale_factor));
        }
        if !(self.min_face_size >= PROPOSAL_CELL) {
            return bad(format!("min_face_size {} below 12", self.min_face_size));
        }
        if let Some(t) = self.thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return bad(format!("stage threshold {t} not in (0, 1)"));
        }
        for (name, v) in [("nms_intra", self.nms_intra), ("nms_cross", self.nms_cross)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} {v} not in (0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

/// A detected face: calibrated box, output-stage confidence and landmarks
/// ordered left eye, right eye, nose, left mouth corner, right mouth corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub landmarks: [Point; 5],
}

/// Proposal-stage output for one pyramid level.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalMaps {
    /// Shape `[rows, cols]`.
    pub prob: Tensor,
    /// Shape `[rows, cols, 4]`.
    pub reg: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOutput {
    pub prob: f64,
    pub reg: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputStageOutput {
    pub prob: f64,
    pub reg: [f64; 4],
    /// Five x offsets followed by five y offsets, each relative to the
    /// input crop and normalised by its width/height.
    pub landmarks: [f64; 10],
}

/// The three cascade networks.
///
/// Implementations must be usable from several threads at once; a backend
/// that is not should wrap itself in a lock.
pub trait StageBackend: Send + Sync {
    /// Runs the fully-convolutional proposal network on a `[h, w, 3]` tensor.
    fn run_pnet(&self, input: &Tensor) -> Result<ProposalMaps, DetectError>;
    /// Scores a batch of `[24, 24, 3]` crops.
    fn run_rnet(&self, batch: &[Tensor]) -> Result<Vec<RefineOutput>, DetectError>;
    /// Scores a batch of `[48, 48, 3]` crops and predicts landmarks.
    fn run_onet(&self, batch: &[Tensor]) -> Result<Vec<OutputStageOutput>, DetectError>;
}

/// Anything that finds faces in an image.
pub trait FaceDetector: Send + Sync {
    fn detect(&self, img: &Image) -> Result<Vec<Detection>, DetectError>;
}

/// Applies regression offsets scaled by the box's width and height.
pub fn calibrate(bbox: &BoundingBox, reg: &[f64; 4]) -> Result<BoundingBox, DetectError> {
    let w = bbox.width();
    let h = bbox.height();
    BoundingBox::try_new(
        bbox.x1 + reg[0] * w,
        bbox.y1 + reg[1] * h,
        bbox.x2 + reg[2] * w,
        bbox.y2 + reg[3] * h,
    )
    .ok_or(DetectError::DegenerateBox)
}

/// Smallest square with the same centre that contains `bbox`.
pub fn square_pad(bbox: &BoundingBox) -> BoundingBox {
    let side = bbox.width().max(bbox.height());
    let (cx, cy) = bbox.center();
    let half = side * 0.5;
    BoundingBox::new(cx - half, cy - half, cx + half, cy + half)
}

/// Converts an image to the cascade's input normalisation.
pub fn cascade_tensor(img: &Image) -> Tensor {
    let values = img
        .pixels()
        .iter()
        .map(|&v| (v as f32 - 127.5) * 0.0078125)
        .collect();
    Tensor::new(vec![img.height() as usize, img.width() as usize, 3], values)
        .expect("shape matches pixel count")
}

fn stage_input(img: &Image, bbox: &BoundingBox, size: u32) -> Result<Tensor, DetectError> {
    let patch = imaging::crop(img, bbox)?;
    Ok(cascade_tensor(&imaging::resize(&patch, size, size)))
}

fn suppress(cands: Vec<Candidate>, threshold: f64, mode: OverlapMode) -> Vec<Candidate> {
    let pairs: Vec<_> = cands.iter().map(|c| (c.bbox, c.score)).collect();
    nms(&pairs, threshold, mode)
        .into_iter()
        .map(|i| cands[i])
        .collect()
}

/// Calibrates each candidate with its own regression vector, then squares
/// it. Candidates whose calibrated box collapses are dropped.
fn calibrate_and_square(cands: Vec<Candidate>) -> Vec<Candidate> {
    cands
        .into_iter()
        .filter_map(|c| {
            calibrate(&c.bbox, &c.reg).ok().map(|b| Candidate {
                bbox: square_pad(&b),
                ..c
            })
        })
        .collect()
}

/// Runs the full cascade and returns faces sorted by descending confidence.
pub fn detect_faces(
    img: &Image,
    backend: &dyn StageBackend,
    cfg: &DetectorConfig,
) -> Result<Vec<Detection>, DetectError> {
    cfg.validate()?;
    let scales = build_pyramid(img.width(), img.height(), cfg)?;

    // proposal stage
    let mut proposals = Vec::new();
    for &scale in &scales {
        let w = (img.width() as f64 * scale).ceil() as u32;
        let h = (img.height() as f64 * scale).ceil() as u32;
        let scaled = imaging::resize(img, w.max(1), h.max(1));
        let maps = backend.run_pnet(&cascade_tensor(&scaled))?;
        let cands = generate_candidates(&maps.prob, &maps.reg, scale, cfg.thresholds[0])?;
        proposals.extend(suppress(cands, cfg.nms_intra, OverlapMode::Union));
    }
    let proposals = suppress(proposals, cfg.nms_cross, OverlapMode::Union);
    let proposals = calibrate_and_square(proposals);
    if proposals.is_empty() {
        return Ok(Vec::new());
    }

    // refine stage
    let batch = proposals
        .iter()
        .map(|c| stage_input(img, &c.bbox, REFINE_INPUT))
        .collect::<Result<Vec<_>, _>>()?;
    let scored = backend.run_rnet(&batch)?;
    if scored.len() != proposals.len() {
        return Err(DetectError::Backend(format!(
            "refine stage returned {} results for {} inputs",
            scored.len(),
            proposals.len()
        )));
    }
    let refined: Vec<Candidate> = proposals
        .iter()
        .zip(&scored)
        .filter(|(_, out)| out.prob >= cfg.thresholds[1])
        .map(|(c, out)| Candidate {
            bbox: c.bbox,
            score: out.prob,
            reg: out.reg,
        })
        .collect();
    let refined = suppress(refined, cfg.nms_cross, OverlapMode::Union);
    let refined = calibrate_and_square(refined);
    if refined.is_empty() {
        return Ok(Vec::new());
    }

    // output stage
    let batch = refined
        .iter()
        .map(|c| stage_input(img, &c.bbox, OUTPUT_INPUT))
        .collect::<Result<Vec<_>, _>>()?;
    let scored = backend.run_onet(&batch)?;
    if scored.len() != refined.len() {
        return Err(DetectError::Backend(format!(
            "output stage returned {} results for {} inputs",
            scored.len(),
            refined.len()
        )));
    }
    let mut finals: Vec<Detection> = Vec::new();
    for (c, out) in refined.iter().zip(&scored) {
        if !(out.prob >= cfg.thresholds[2]) {
            continue;
        }
        let (w, h) = (c.bbox.width(), c.bbox.height());
        let landmarks = std::array::from_fn(|k| Point {
            x: c.bbox.x1 + out.landmarks[k] * w,
            y: c.bbox.y1 + out.landmarks[k + 5] * h,
        });
        if let Ok(bbox) = calibrate(&c.bbox, &out.reg) {
            finals.push(Detection {
                bbox,
                confidence: out.prob.clamp(0.0, 1.0),
                landmarks,
            });
        }
    }
    let pairs: Vec<_> = finals.iter().map(|d| (d.bbox, d.confidence)).collect();
    let keep = nms(&pairs, cfg.nms_cross, OverlapMode::Min);
    Ok(keep.into_iter().map(|i| finals[i].clone()).collect())
}

/// Square crop around a detection, resized to `size` × `size`; the input
/// the embedder expects.
pub fn align_face(img: &Image, detection: &Detection, size: u32) -> Result<Image, DetectError> {
    let face = imaging::crop(img, &square_pad(&detection.bbox))?;
    Ok(imaging::resize(&face, size, size))
}

/// The cascade bound to a backend and configuration.
pub struct CascadeDetector {
    backend: Box<dyn StageBackend>,
    config: DetectorConfig,
}

impl CascadeDetector {
    pub fn new(backend: Box<dyn StageBackend>, config: DetectorConfig) -> Result<Self, DetectError> {
        config.validate()?;
        Ok(Self { backend, config })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }
}

impl FaceDetector for CascadeDetector {
    fn detect(&self, img: &Image) -> Result<Vec<Detection>, DetectError> {
        detect_faces(img, self.backend.as_ref(), &self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibrate_zero_is_identity() {
        let b = BoundingBox::new(1.5, 2.0, 9.0, 30.0);
        assert_eq!(calibrate(&b, &[0.0; 4]).unwrap(), b);
    }

    #[test]
    fn calibrate_shrinks() {
        let b = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
        let out = calibrate(&b, &[0.1, 0.1, -0.1, -0.1]).unwrap();
        for (got, want) in [out.x1, out.y1, out.x2, out.y2].iter().zip([1.0, 1.0, 9.0, 9.0]) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn calibrate_collapse_is_degenerate() {
        let b = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(calibrate(&b, &[1.0, 0.0, -1.0, 0.0]), Err(DetectError::DegenerateBox));
    }

    #[test]
    fn square_pad_examples() {
        let sq = BoundingBox::new(2.0, 3.0, 7.0, 8.0);
        assert_eq!(square_pad(&sq), sq);
        assert_eq!(
            square_pad(&BoundingBox::new(0.0, 0.0, 10.0, 20.0)),
            BoundingBox::new(-5.0, 0.0, 15.0, 20.0)
        );
    }

    #[test]
    fn config_validation() {
        assert!(DetectorConfig::default().validate().is_ok());
        let mut c = DetectorConfig::default();
        c.scale_factor = 1.0;
        assert!(c.validate().is_err());
        let mut c = DetectorConfig::default();
        c.min_face_size = 10.0;
        assert!(c.validate().is_err());
        let mut c = DetectorConfig::default();
        c.thresholds[2] = 0.0;
        assert!(c.validate().is_err());
    }
}
