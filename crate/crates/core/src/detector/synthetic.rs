//! Deterministic stage backends for running the cascade without weights.
//!
//! [`SyntheticBackend`] recognises the synthetic faces drawn by
//! [`crate::synth`]: a textured square framed by a green border, on a dark
//! background. Its three stages mimic what the trained networks do:
//!
//! * proposal: scores each 12×12 window by how well it matches the
//!   foreground blob found in its neighbourhood and regresses onto that blob,
//! * refine / output: score a crop by whether the blob it contains carries
//!   the green frame on its border, and regress onto the blob.
//!
//! [`SilentBackend`] never finds anything.

use super::{
    DetectError, OutputStageOutput, ProposalMaps, RefineOutput, StageBackend, PROPOSAL_CELL,
};
use crate::imaging::Tensor;

/// Normalised value above which any channel marks a pixel as foreground
/// (raw intensity 16).
const FOREGROUND_LEVEL: f32 = -0.87;
/// Frame pixels: green above raw 153, red and blue below raw 102.
const FRAME_GREEN_MIN: f32 = 0.2;
const FRAME_OTHER_MAX: f32 = -0.2;

/// Frame width as a fraction of the face side.
pub const FRAME_FRACTION: f64 = 0.1;

/// Landmark positions within a synthetic face, as fractions of its box:
/// left eye, right eye, nose, left mouth corner, right mouth corner.
pub const LANDMARK_LAYOUT: [(f64, f64); 5] = [
    (0.3, 0.35),
    (0.7, 0.35),
    (0.5, 0.55),
    (0.35, 0.75),
    (0.65, 0.75),
];

/// A stage backend with all-zero outputs.
#[derive(Debug, Default, Clone, Copy)]
pub struct SilentBackend;

impl StageBackend for SilentBackend {
    fn run_pnet(&self, input: &Tensor) -> Result<ProposalMaps, DetectError> {
        let (rows, cols) = map_dims(input)?;
        Ok(ProposalMaps {
            prob: Tensor::zeros(vec![rows, cols]),
            reg: Tensor::zeros(vec![rows, cols, 4]),
        })
    }

    fn run_rnet(&self, batch: &[Tensor]) -> Result<Vec<RefineOutput>, DetectError> {
        Ok(vec![
            RefineOutput {
                prob: 0.0,
                reg: [0.0; 4]
            };
            batch.len()
        ])
    }

    fn run_onet(&self, batch: &[Tensor]) -> Result<Vec<OutputStageOutput>, DetectError> {
        Ok(vec![
            OutputStageOutput {
                prob: 0.0,
                reg: [0.0; 4],
                landmarks: [0.0; 10],
            };
            batch.len()
        ])
    }
}

/// Backend that detects [`crate::synth`] faces.
#[derive(Debug, Default, Clone, Copy)]
pub struct SyntheticBackend;

fn hwc(input: &Tensor) -> Result<(usize, usize), DetectError> {
    match input.shape() {
        [h, w, 3] => Ok((*h, *w)),
        other => Err(DetectError::Backend(format!(
            "expected a [h, w, 3] tensor, got {other:?}"
        ))),
    }
}

fn map_dims(input: &Tensor) -> Result<(usize, usize), DetectError> {
    let (h, w) = hwc(input)?;
    let cell = PROPOSAL_CELL as usize;
    let dim = |n: usize| if n < cell { 0 } else { (n - cell) / 2 + 1 };
    Ok((dim(h), dim(w)))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum PixelClass {
    Background,
    Frame,
    Interior,
}

struct Mask {
    w: usize,
    h: usize,
    class: Vec<PixelClass>,
    /// Row-wise prefix counts of foreground pixels, `(w + 1)` per row.
    row_prefix: Vec<u32>,
    /// Column-wise prefix counts of foreground pixels, `(h + 1)` per column.
    col_prefix: Vec<u32>,
}

impl Mask {
    fn new(input: &Tensor) -> Result<Self, DetectError> {
        let (h, w) = hwc(input)?;
        let v = input.values();
        let class: Vec<PixelClass> = v
            .chunks_exact(3)
            .map(|p| {
                if p[1] > FRAME_GREEN_MIN && p[0] < FRAME_OTHER_MAX && p[2] < FRAME_OTHER_MAX {
                    PixelClass::Frame
                } else if p.iter().any(|&c| c > FOREGROUND_LEVEL) {
                    PixelClass::Interior
                } else {
                    PixelClass::Background
                }
            })
            .collect();
        let mut row_prefix = vec![0u32; h * (w + 1)];
        let mut col_prefix = vec![0u32; w * (h + 1)];
        for y in 0..h {
            for x in 0..w {
                let fg = (class[y * w + x] != PixelClass::Background) as u32;
                row_prefix[y * (w + 1) + x + 1] = row_prefix[y * (w + 1) + x] + fg;
                col_prefix[x * (h + 1) + y + 1] = col_prefix[x * (h + 1) + y] + fg;
            }
        }
        Ok(Self {
            w,
            h,
            class,
            row_prefix,
            col_prefix,
        })
    }

    fn row_count(&self, y: usize, x0: usize, x1: usize) -> u32 {
        let base = y * (self.w + 1);
        self.row_prefix[base + x1] - self.row_prefix[base + x0]
    }

    fn col_count(&self, x: usize, y0: usize, y1: usize) -> u32 {
        let base = x * (self.h + 1);
        self.col_prefix[base + y1] - self.col_prefix[base + y0]
    }

    /// Tight box `(x0, y0, x1, y1)` (exclusive ends) around the foreground
    /// inside the given region.
    fn foreground_box(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> Option<(usize, usize, usize, usize)> {
        let rows: Vec<usize> = (y0..y1).filter(|&y| self.row_count(y, x0, x1) > 0).collect();
        let cols: Vec<usize> = (x0..x1).filter(|&x| self.col_count(x, y0, y1) > 0).collect();
        Some((*cols.first()?, *rows.first()?, cols.last()? + 1, rows.last()? + 1))
    }

    fn class_at(&self, x: usize, y: usize) -> PixelClass {
        self.class[y * self.w + x]
    }
}

/// Scores a crop by the framed blob inside it; returns probability,
/// regression onto the blob, and the blob box in crop pixels.
fn score_crop(input: &Tensor) -> Result<(f64, [f64; 4], Option<(f64, f64, f64, f64)>), DetectError> {
    let mask = Mask::new(input)?;
    let (w, h) = (mask.w, mask.h);
    let Some((bx0, by0, bx1, by1)) = mask.foreground_box(0, 0, w, h) else {
        return Ok((0.0, [0.0; 4], None));
    };
    let side = (bx1 - bx0).min(by1 - by0) as f64;
    let ring_outer = ((side * FRAME_FRACTION).floor() as usize).max(2);
    let interior_margin = (side * FRAME_FRACTION * 1.5).ceil() as usize;

    let (mut ring_total, mut ring_frame) = (0u32, 0u32);
    let (mut core_total, mut core_ok) = (0u32, 0u32);
    for y in by0..by1 {
        for x in bx0..bx1 {
            let d = (x - bx0).min(bx1 - 1 - x).min(y - by0).min(by1 - 1 - y);
            let class = mask.class_at(x, y);
            if d >= 1 && d < ring_outer {
                ring_total += 1;
                ring_frame += (class == PixelClass::Frame) as u32;
            } else if d >= interior_margin {
                core_total += 1;
                core_ok += (class == PixelClass::Interior) as u32;
            }
        }
    }
    let frac = |num: u32, den: u32| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let prob = frac(ring_frame, ring_total) * frac(core_ok, core_total);
    let (wf, hf) = (w as f64, h as f64);
    let reg = [
        bx0 as f64 / wf,
        by0 as f64 / hf,
        (bx1 as f64 - wf) / wf,
        (by1 as f64 - hf) / hf,
    ];
    Ok((prob, reg, Some((bx0 as f64, by0 as f64, bx1 as f64, by1 as f64))))
}

impl StageBackend for SyntheticBackend {
    fn run_pnet(&self, input: &Tensor) -> Result<ProposalMaps, DetectError> {
        let (rows, cols) = map_dims(input)?;
        let mask = Mask::new(input)?;
        let cell = PROPOSAL_CELL as usize;
        let reach = cell / 2;
        let mut prob = Tensor::zeros(vec![rows, cols]);
        let mut reg = Tensor::zeros(vec![rows, cols, 4]);
        for i in 0..rows {
            for j in 0..cols {
                let (wx, wy) = (j * 2, i * 2);
                let any = (wy..wy + cell).any(|y| mask.row_count(y, wx, wx + cell) > 0);
                if !any {
                    continue;
                }
                let region = (
                    wx.saturating_sub(reach),
                    wy.saturating_sub(reach),
                    (wx + cell + reach).min(mask.w),
                    (wy + cell + reach).min(mask.h),
                );
                let Some((fx0, fy0, fx1, fy1)) =
                    mask.foreground_box(region.0, region.1, region.2, region.3)
                else {
                    continue;
                };
                let ix = (wx + cell).min(fx1) as f64 - wx.max(fx0) as f64;
                let iy = (wy + cell).min(fy1) as f64 - wy.max(fy0) as f64;
                if ix <= 0.0 || iy <= 0.0 {
                    continue;
                }
                let blob_area = ((fx1 - fx0) * (fy1 - fy0)) as f64;
                let score = ix * iy / (PROPOSAL_CELL * PROPOSAL_CELL * blob_area).sqrt();
                prob.values_mut()[i * cols + j] = score as f32;
                let o = (i * cols + j) * 4;
                let c = PROPOSAL_CELL as f32;
                reg.values_mut()[o..o + 4].copy_from_slice(&[
                    (fx0 as f32 - wx as f32) / c,
                    (fy0 as f32 - wy as f32) / c,
                    (fx1 as f32 - (wx + cell) as f32) / c,
                    (fy1 as f32 - (wy + cell) as f32) / c,
                ]);
            }
        }
        Ok(ProposalMaps { prob, reg })
    }

    fn run_rnet(&self, batch: &[Tensor]) -> Result<Vec<RefineOutput>, DetectError> {
        batch
            .iter()
            .map(|t| score_crop(t).map(|(prob, reg, _)| RefineOutput { prob, reg }))
            .collect()
    }

    fn run_onet(&self, batch: &[Tensor]) -> Result<Vec<OutputStageOutput>, DetectError> {
        batch
            .iter()
            .map(|t| {
                let (h, w) = hwc(t)?;
                let (prob, reg, blob) = score_crop(t)?;
                let mut landmarks = [0.0; 10];
                if let Some((x0, y0, x1, y1)) = blob {
                    for (k, (fx, fy)) in LANDMARK_LAYOUT.iter().enumerate() {
                        landmarks[k] = (x0 + fx * (x1 - x0)) / w as f64;
                        landmarks[k + 5] = (y0 + fy * (y1 - y0)) / h as f64;
                    }
                }
                Ok(OutputStageOutput {
                    prob,
                    reg,
                    landmarks,
                })
            })
            .collect()
    }
}
