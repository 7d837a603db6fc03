use serde::{Deserialize, Serialize};

use crate::geometry::BoundingBox;

/// How overlap between two boxes is measured during suppression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapMode {
    /// Intersection over union.
    Union,
    /// Intersection over the smaller of the two areas.
    Min,
}

/// Intersection over union of two valid boxes, in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

pub fn overlap(a: &BoundingBox, b: &BoundingBox, mode: OverlapMode) -> f64 {
    match mode {
        OverlapMode::Union => iou(a, b),
        OverlapMode::Min => {
            let inter = a.intersection_area(b);
            if inter == 0.0 {
                0.0
            } else {
                inter / a.area().min(b.area())
            }
        }
    }
}

/// Greedy non-maximum suppression.
///
/// Returns indices into `boxes` of the survivors, ordered by descending
/// confidence; equal confidences keep their input order. A box is dropped
/// when its overlap with an already kept box is strictly greater than
/// `threshold`.
pub fn nms(boxes: &[(BoundingBox, f64)], threshold: f64, mode: OverlapMode) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    // stable: ties stay in input order
    order.sort_by(|&a, &b| boxes[b].1.total_cmp(&boxes[a].1));

    let mut suppressed = vec![false; order.len()];
    let mut keep = Vec::new();
    for i in 0..order.len() {
        if suppressed[i] {
            continue;
        }
        let kept = &boxes[order[i]].0;
        keep.push(order[i]);
        for j in (i + 1)..order.len() {
            if !suppressed[j] && overlap(kept, &boxes[order[j]].0, mode) > threshold {
                suppressed[j] = true;
            }
        }
    }
    keep
}
