//! Independent oracles and fixtures shared by the integration tests and the
//! acceptance target. Nothing here calls the code paths it is used to check.
#![allow(dead_code)]

use std::sync::Arc;

use faceauth::auth::{AuthService, MasterKey};
use faceauth::config::ServiceConfig;
use faceauth::dataset::{LabeledDataset, Sample};
use faceauth::detector::synthetic::SyntheticBackend;
use faceauth::detector::{align_face, BoundingBox, CascadeDetector, DetectorConfig, FaceDetector, OverlapMode};
use faceauth::embedder::{embed, MockBackend, FACE_SIZE};
use faceauth::imaging::{encode_png_data_uri, Image};
use faceauth::synth::{face_photo, IdentityTexture};
use faceauth::TrainConfig;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------- geometry / NMS ----------

/// Overlap from raw interval arithmetic.
pub fn overlap_oracle(a: &BoundingBox, b: &BoundingBox, mode: OverlapMode) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let area_a = (a.x2 - a.x1) * (a.y2 - a.y1);
    let area_b = (b.x2 - b.x1) * (b.y2 - b.y1);
    match mode {
        OverlapMode::Union => inter / (area_a + area_b - inter),
        OverlapMode::Min => inter / area_a.min(area_b),
    }
}

/// Brute-force greedy suppression: with every overlap precomputed, scan all
/// live boxes for the best (highest score, then lowest index), keep it and
/// kill everything it overlaps above the threshold.
pub fn nms_oracle(boxes: &[(BoundingBox, f64)], threshold: f64, mode: OverlapMode) -> Vec<usize> {
    let n = boxes.len();
    let mut ov = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            ov[i][j] = overlap_oracle(&boxes[i].0, &boxes[j].0, mode);
        }
    }
    let mut alive = vec![true; n];
    let mut kept = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if alive[i] && best.map_or(true, |b| boxes[i].1 > boxes[b].1) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        kept.push(b);
        alive[b] = false;
        for j in 0..n {
            if alive[j] && ov[b][j] > threshold {
                alive[j] = false;
            }
        }
    }
    kept
}

/// Random boxes packed into a small field so overlaps are common; scores
/// come from a coarse set so ties occur.
pub fn random_boxes(rng: &mut impl Rng, n: usize) -> Vec<(BoundingBox, f64)> {
    (0..n)
        .map(|_| {
            let x = rng.random_range(0.0..100.0);
            let y = rng.random_range(0.0..100.0);
            let w = rng.random_range(1.0..40.0);
            let h = rng.random_range(1.0..40.0);
            let score = rng.random_range(0..20) as f64 / 20.0;
            (BoundingBox::new(x, y, x + w, y + h), score)
        })
        .collect()
}

// ---------- SVM ----------

/// `½(‖w‖² + b²) + C Σ max(0, 1 − y(w·x + b))²`, the primal whose dual the
/// trainer solves (bias regularised as a constant feature).
pub fn svm_objective(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[f64], c: f64) -> f64 {
    let reg = 0.5 * (w.iter().map(|v| v * v).sum::<f64>() + b * b);
    let loss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let m = y * (x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b);
            (1.0 - m).max(0.0).powi(2)
        })
        .sum();
    reg + c * loss
}

/// Grid search over (w1, w2, b) for 2-d data: evaluate the objective on a
/// 21³ lattice, recentre on the best node and halve the spacing, until the
/// spacing is negligible. Valid because the objective is strictly convex.
pub fn grid_minimum_2d(xs: &[Vec<f64>], ys: &[f64], c: f64) -> (f64, [f64; 3]) {
    // |w|,|b| ≤ sqrt(2·objective(0)) = sqrt(2·C·n)
    let radius = (2.0 * c * xs.len() as f64).sqrt();
    let mut centre = [0.0; 3];
    let mut step = radius / 10.0;
    let mut best = (svm_objective(&[0.0, 0.0], 0.0, xs, ys, c), centre);
    while step > 1e-7 {
        for i in -10..=10 {
            for j in -10..=10 {
                for k in -10..=10 {
                    let p = [
                        centre[0] + i as f64 * step,
                        centre[1] + j as f64 * step,
                        centre[2] + k as f64 * step,
                    ];
                    let v = svm_objective(&p[..2], p[2], xs, ys, c);
                    if v < best.0 {
                        best = (v, p);
                    }
                }
            }
        }
        centre = best.1;
        step *= 0.5;
    }
    best
}

/// Perceptron with bias; `true` iff it reaches zero training errors, which
/// proves linear separability.
pub fn perceptron_separable(xs: &[Vec<f64>], ys: &[f64], max_epochs: usize) -> bool {
    let d = xs[0].len();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for _ in 0..max_epochs {
        let mut errors = 0;
        for (x, &y) in xs.iter().zip(ys) {
            let s: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
            if y * s <= 0.0 {
                errors += 1;
                for (wj, xj) in w.iter_mut().zip(x) {
                    *wj += y * xj;
                }
                b += y;
            }
        }
        if errors == 0 {
            return true;
        }
    }
    false
}

/// Two classes split by a random hyperplane with a guaranteed gap.
pub fn planted_separable(rng: &mut impl Rng, n: usize, dim: usize, gap: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let normal: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
    let normal: Vec<f64> = normal.iter().map(|v| v / norm).collect();
    let offset = rng.random_range(-0.3..0.3);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    while xs.len() < n {
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let s: f64 = x.iter().zip(&normal).map(|(a, b)| a * b).sum::<f64>() + offset;
        if s.abs() < gap {
            continue;
        }
        // make sure both classes are present
        let y = if xs.len() == 0 { 1.0 } else if xs.len() == 1 { -1.0 } else { s.signum() };
        if y != s.signum() {
            continue;
        }
        xs.push(x);
        ys.push(y);
    }
    (xs, ys)
}

pub fn samples_from(xs: &[Vec<f64>], ys: &[f64]) -> Vec<Sample> {
    xs.iter()
        .zip(ys)
        .map(|(x, y)| Sample::new(x.clone(), if *y > 0.0 { "pos" } else { "neg" }))
        .collect()
}

// ---------- metrics ----------

/// Confusion counts filled by hand-style double loop.
pub fn confusion_oracle(classes: &[String], truth: &[String], pred: &[String]) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; classes.len()]; classes.len()];
    for (t, p) in truth.iter().zip(pred) {
        let i = classes.iter().position(|c| c == t).unwrap();
        let j = classes.iter().position(|c| c == p).unwrap();
        m[i][j] += 1;
    }
    m
}

// ---------- pipeline fixtures ----------

pub fn synthetic_detector() -> CascadeDetector {
    CascadeDetector::new(Box::new(SyntheticBackend), DetectorConfig::default()).unwrap()
}

/// `per_identity` photos of each of `identities` synthetic people.
/// Identity `i` is labelled `id<i>` and uses texture seed `seed·1000 + i`.
pub fn photos(identities: usize, per_identity: usize, seed: u64) -> Vec<(Image, String)> {
    let mut out = Vec::new();
    for i in 0..identities {
        let texture = IdentityTexture::from_seed(seed * 1000 + i as u64);
        for j in 0..per_identity {
            let (img, _) = face_photo(&texture, seed * 100_000 + (i * per_identity + j) as u64, 160);
            out.push((img, format!("id{i:02}")));
        }
    }
    out
}

/// Detect → align → embed for every photo.
pub fn embed_photos(photos: &[(Image, String)], embedder_seed: u64) -> LabeledDataset {
    let detector = synthetic_detector();
    let backend = MockBackend::new(embedder_seed);
    photos
        .iter()
        .map(|(img, label)| {
            let faces = detector.detect(img).unwrap();
            assert_eq!(faces.len(), 1, "fixture photo of {label} must contain one face");
            let crop = align_face(img, &faces[0], FACE_SIZE).unwrap();
            Sample::new(embed(&crop, &backend).unwrap().into_vec(), label.clone())
        })
        .collect()
}

/// The same samples with labels randomly permuted.
pub fn shuffle_labels(data: &LabeledDataset, seed: u64) -> LabeledDataset {
    let mut labels: Vec<String> = data.samples.iter().map(|s| s.label.clone()).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    data.samples
        .iter()
        .zip(labels)
        .map(|(s, l)| Sample::new(s.features.clone(), l))
        .collect()
}

// ---------- auth fixtures ----------

pub const TEST_KEY_HEX: &str = "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f";

pub fn open_service(dir: &std::path::Path, reject_margin: f64) -> AuthService {
    let cfg = ServiceConfig {
        store_dir: dir.to_path_buf(),
        reject_margin,
        ..ServiceConfig::default()
    };
    AuthService::open(
        &cfg,
        TrainConfig::default(),
        Arc::new(synthetic_detector()),
        Arc::new(MockBackend::new(0)),
        MasterKey::from_hex(TEST_KEY_HEX).unwrap(),
    )
    .unwrap()
}

/// PNG data URIs of photos `first..first + n` of user `user`.
pub fn user_images(user: usize, first: usize, n: usize) -> Vec<String> {
    let texture = IdentityTexture::from_seed(500 + user as u64);
    (first..first + n)
        .map(|j| {
            let (img, _) = face_photo(&texture, 9_000 + (user * 100 + j) as u64, 160);
            encode_png_data_uri(&img).unwrap()
        })
        .collect()
}

pub fn user_email(user: usize) -> String {
    format!("user{user}@example.org")
}
