//! Image pyramid and proposal-map decoding for the first cascade stage.

use super::{DetectError, DetectorConfig};
use crate::geometry::BoundingBox;
use crate::imaging::Tensor;

/// Stride of the proposal network's output map, in input pixels.
pub const PROPOSAL_STRIDE: f64 = 2.0;
/// Receptive field of one proposal-map cell, in input pixels.
pub const PROPOSAL_CELL: f64 = 12.0;

/// A window proposed by a cascade stage, with the regression offsets that
/// stage predicted for it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub bbox: BoundingBox,
    pub score: f64,
    pub reg: [f64; 4],
}

/// Scales at which the proposal network is run: `(12 / min_face) * factor^k`
/// for as long as the scaled shorter side is still at least 12 pixels.
pub fn build_pyramid(width: u32, height: u32, cfg: &DetectorConfig) -> Result<Vec<f64>, DetectError> {
    let min_dim = width.min(height) as f64;
    if min_dim < cfg.min_face_size {
        return Err(DetectError::ImageTooSmall {
            width,
            height,
            min_face_size: cfg.min_face_size,
        });
    }
    let base = PROPOSAL_CELL / cfg.min_face_size;
    let mut scales = Vec::new();
    let mut k = 0;
    loop {
        let scale = base * cfg.scale_factor.powi(k);
        if min_dim * scale < PROPOSAL_CELL {
            break;
        }
        scales.push(scale);
        k += 1;
    }
    Ok(scales)
}

/// Turns proposal maps computed at `scale` into candidate windows in
/// original-image coordinates.
///
/// `prob` has shape `[rows, cols]`, `reg` has shape `[rows, cols, 4]`. Cells
/// are visited row-major; a cell is emitted when its probability is at least
/// `threshold`.
pub fn generate_candidates(
    prob: &Tensor,
    reg: &Tensor,
    scale: f64,
    threshold: f64,
) -> Result<Vec<Candidate>, DetectError> {
    let (rows, cols) = match prob.shape() {
        [r, c] => (*r, *c),
        other => {
            return Err(DetectError::Backend(format!(
                "probability map must be 2-d, got shape {other:?}"
            )))
        }
    };
    if reg.shape() != [rows, cols, 4] {
        return Err(DetectError::Backend(format!(
            "regression map shape {:?} does not match probability map {:?}",
            reg.shape(),
            prob.shape()
        )));
    }
    let mut out = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let score = prob.values()[i * cols + j] as f64;
            if score < threshold {
                continue;
            }
            let o = (i * cols + j) * 4;
            let r = &reg.values()[o..o + 4];
            let x = j as f64 * PROPOSAL_STRIDE;
            let y = i as f64 * PROPOSAL_STRIDE;
            out.push(Candidate {
                bbox: BoundingBox::new(
                    x / scale,
                    y / scale,
                    (x + PROPOSAL_CELL) / scale,
                    (y + PROPOSAL_CELL) / scale,
                ),
                score,
                reg: [r[0] as f64, r[1] as f64, r[2] as f64, r[3] as f64],
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(min_face: f64) -> DetectorConfig {
        DetectorConfig {
            min_face_size: min_face,
            ..DetectorConfig::default()
        }
    }

    #[test]
    fn pyramid_for_160_square() {
        let scales = build_pyramid(160, 160, &cfg(20.0)).unwrap();
        assert!((scales[0] - 0.6).abs() < 1e-12);
        for w in scales.windows(2) {
            assert!(w[1] < w[0]);
        }
        let last = *scales.last().unwrap();
        assert!(160.0 * last >= 12.0);
        assert!(160.0 * last * 0.709 < 12.0);
        // 0.6 * 0.709^k * 160 >= 12  <=>  k <= ln(1/8)/ln(0.709) = 6.04
        assert_eq!(scales.len(), 7);
    }

    #[test]
    fn pyramid_at_boundary_has_one_scale() {
        assert_eq!(build_pyramid(12, 40, &cfg(12.0)).unwrap(), vec![1.0]);
    }

    #[test]
    fn pyramid_rejects_small_image() {
        assert!(matches!(
            build_pyramid(11, 300, &cfg(12.0)),
            Err(DetectError::ImageTooSmall { .. })
        ));
    }

    fn maps(rows: usize, cols: usize, hot: &[(usize, usize)]) -> (Tensor, Tensor) {
        let mut prob = Tensor::zeros(vec![rows, cols]);
        for &(i, j) in hot {
            prob.values_mut()[i * cols + j] = 0.9;
        }
        (prob, Tensor::zeros(vec![rows, cols, 4]))
    }

    #[test]
    fn zero_map_gives_nothing() {
        let (p, r) = maps(5, 5, &[]);
        assert!(generate_candidates(&p, &r, 1.0, 0.6).unwrap().is_empty());
    }

    #[test]
    fn origin_cell_at_unit_scale() {
        let (p, r) = maps(3, 3, &[(0, 0)]);
        let c = generate_candidates(&p, &r, 1.0, 0.6).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].bbox, BoundingBox::new(0.0, 0.0, 12.0, 12.0));
    }

    #[test]
    fn offset_cell_at_half_scale() {
        let (p, mut r) = maps(6, 8, &[(3, 5)]);
        let o = (3 * 8 + 5) * 4;
        r.values_mut()[o..o + 4].copy_from_slice(&[0.1, -0.2, 0.3, -0.4]);
        let c = generate_candidates(&p, &r, 0.5, 0.6).unwrap();
        assert_eq!(c.len(), 1);
        // x = 5*2/0.5, y = 3*2/0.5, +12/0.5
        assert_eq!(c[0].bbox, BoundingBox::new(20.0, 12.0, 44.0, 36.0));
        assert!((c[0].reg[3] + 0.4).abs() < 1e-6);
    }

    #[test]
    fn threshold_is_inclusive() {
        let mut prob = Tensor::zeros(vec![1, 1]);
        prob.values_mut()[0] = 0.5;
        let reg = Tensor::zeros(vec![1, 1, 4]);
        assert_eq!(generate_candidates(&prob, &reg, 1.0, 0.5).unwrap().len(), 1);
    }

    #[test]
    fn misaligned_maps_are_rejected() {
        let prob = Tensor::zeros(vec![2, 2]);
        let reg = Tensor::zeros(vec![2, 3, 4]);
        assert!(generate_candidates(&prob, &reg, 1.0, 0.5).is_err());
    }
}
