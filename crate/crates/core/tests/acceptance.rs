//! One PASS/FAIL line per acceptance criterion. Exits nonzero on any failure.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use faceauth::auth::{decrypt_code, AuthError, CryptoError, MasterKey, UserStore};
use faceauth::classifier::{fit_binary, load_model, save_model, train, ClassifierError};
use faceauth::dataset::{LabeledDataset, Sample};
use faceauth::detector::{calibrate, iou, nms, square_pad, BoundingBox, OverlapMode};
use faceauth::embedder::{Embedding, MockBackend, EMBEDDING_DIM};
use faceauth::evaluation::{
    bias_report, compute_metrics, cross_validate, holdout_evaluation, stratified_kfold, stratified_split, SplitConfig,
};
use faceauth::pipeline::{embed_archive, ingest, to_dataset, write_synthetic_dataset, MultiFacePolicy};
use faceauth::TrainConfig;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GEOMETRY_TOL: f64 = 1e-9;
const OBJECTIVE_TOL: f64 = 1e-3;
const METRIC_TOL: f64 = 1e-12;
const NMS_BUDGET: Duration = Duration::from_secs(10);
const SVM_BUDGET: Duration = Duration::from_secs(60);
const E2E_BUDGET: Duration = Duration::from_secs(120);
const AUTH_BUDGET: Duration = Duration::from_secs(60);
const MIN_ACCURACY: f64 = 0.95;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(start: Instant, budget: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure!(t <= budget, "took {:.2}s, budget {:.0}s", t.as_secs_f64(), budget.as_secs_f64());
    Ok(t)
}

fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
    BoundingBox::new(x1, y1, x2, y2)
}

fn close(a: &BoundingBox, b: &BoundingBox) -> bool {
    [(a.x1, b.x1), (a.y1, b.y1), (a.x2, b.x2), (a.y2, b.y2)]
        .iter()
        .all(|(p, q)| (p - q).abs() < GEOMETRY_TOL)
}

fn nms_matches_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let start = Instant::now();
    for trial in 0..1000 {
        let n = rng.random_range(0..=200);
        let boxes = common::random_boxes(&mut rng, n);
        let threshold = rng.random_range(0.05..0.95);
        let mode = if trial % 2 == 0 { OverlapMode::Union } else { OverlapMode::Min };
        let got = nms(&boxes, threshold, mode);
        let want = common::nms_oracle(&boxes, threshold, mode);
        ensure!(got == want, "trial {trial}: kept {got:?}, oracle {want:?}");
    }
    let t = within(start, NMS_BUDGET)?;
    Ok(format!("1000 sets of up to 200 boxes agree with the brute-force oracle in {:.2}s", t.as_secs_f64()))
}

fn box_geometry() -> Outcome {
    let a = bb(0.0, 0.0, 10.0, 10.0);
    ensure!((iou(&a, &a) - 1.0).abs() < GEOMETRY_TOL, "self IoU");
    ensure!(iou(&a, &bb(20.0, 20.0, 30.0, 30.0)).abs() < GEOMETRY_TOL, "disjoint IoU");
    ensure!((iou(&a, &bb(5.0, 5.0, 15.0, 15.0)) - 25.0 / 175.0).abs() < GEOMETRY_TOL, "partial IoU");
    ensure!(close(&calibrate(&a, &[0.0; 4]).map_err(|e| e.to_string())?, &a), "zero offsets");
    ensure!(
        close(&calibrate(&a, &[0.1, 0.1, -0.1, -0.1]).map_err(|e| e.to_string())?, &bb(1.0, 1.0, 9.0, 9.0)),
        "shrink offsets"
    );
    ensure!(calibrate(&a, &[1.0, 0.0, -1.0, 0.0]).is_err(), "degenerate calibration accepted");
    ensure!(close(&square_pad(&bb(3.0, 4.0, 13.0, 14.0)), &bb(3.0, 4.0, 13.0, 14.0)), "square unchanged");
    ensure!(close(&square_pad(&bb(0.0, 0.0, 10.0, 20.0)), &bb(-5.0, 0.0, 15.0, 20.0)), "tall box");

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let boxes = common::random_boxes(&mut rng, 2);
        let (p, q) = (&boxes[0].0, &boxes[1].0);
        ensure!((iou(p, q) - common::overlap_oracle(p, q, OverlapMode::Union)).abs() < GEOMETRY_TOL, "IoU vs oracle");
        let s = square_pad(p);
        ensure!((s.width() - s.height()).abs() < GEOMETRY_TOL, "square_pad not square");
        ensure!((s.width() - p.width().max(p.height())).abs() < GEOMETRY_TOL, "square_pad side");
        let (c0, c1) = (p.center(), s.center());
        ensure!((c0.0 - c1.0).abs() < GEOMETRY_TOL && (c0.1 - c1.1).abs() < GEOMETRY_TOL, "square_pad center");
    }
    Ok(format!("IoU, calibration and square padding within {GEOMETRY_TOL:e}"))
}

fn svm_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let tight = TrainConfig { tolerance: 1e-6, max_epochs: 100_000, ..TrainConfig::default() };
    let mut worst: f64 = 0.0;
    for trial in 0..25 {
        let n = rng.random_range(2..=20);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let y = if i % 2 == 0 { 1.0 } else { -1.0 };
            let shift = rng.random_range(0.0..1.5) * y;
            xs.push(vec![rng.random_range(-1.0..1.0) + shift, rng.random_range(-1.0..1.0) + shift]);
            ys.push(y);
        }
        let c = [0.1, 1.0, 5.0][trial % 3];
        let cfg = TrainConfig { hyper_c: c, ..tight.clone() };
        let rows: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let fit = fit_binary(&rows, &ys, &cfg).map_err(|e| e.to_string())?;
        let ours = common::svm_objective(&fit.weights, fit.bias, &xs, &ys, c);
        let (grid, _) = common::grid_minimum_2d(&xs, &ys, c);
        worst = worst.max(ours - grid);
        ensure!(ours - grid <= OBJECTIVE_TOL, "trial {trial}: objective {ours} vs grid {grid}");
    }

    for trial in 0..60 {
        let dim = [2, 5, 20][trial % 3];
        let (xs, ys) = common::planted_separable(&mut rng, 40, dim, 0.25);
        ensure!(common::perceptron_separable(&xs, &ys, 10_000), "trial {trial}: planted set not separable");
        let model = train(&common::samples_from(&xs, &ys), &TrainConfig::default()).map_err(|e| e.to_string())?;
        for (x, y) in xs.iter().zip(&ys) {
            let want = if *y > 0.0 { "pos" } else { "neg" };
            ensure!(model.predict(x).map_err(|e| e.to_string())? == want, "trial {trial}: training error");
        }
    }

    let samples: Vec<Sample> = (0..60)
        .map(|i| {
            let x: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0) + (i % 3) as f64).collect();
            Sample::new(x, format!("k{}", i % 3))
        })
        .collect();
    let a = train(&samples, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let b = train(&samples, &TrainConfig::default()).map_err(|e| e.to_string())?;
    ensure!(a.to_bytes() == b.to_bytes(), "same seed gave different weights");

    let t = within(start, SVM_BUDGET)?;
    Ok(format!(
        "objective gap {worst:.2e} <= {OBJECTIVE_TOL:e}, 60 separable sets fit exactly, bitwise repeatable, {:.2}s",
        t.as_secs_f64()
    ))
}

fn metrics_oracle() -> Outcome {
    let eq = |a: f64, b: f64| (a - b).abs() < METRIC_TOL;
    let r = compute_metrics(&["a", "a", "b", "b"], &["a", "b", "b", "b"]).map_err(|e| e.to_string())?;
    ensure!(r.confusion == vec![vec![1, 1], vec![0, 2]], "2-class confusion {:?}", r.confusion);
    ensure!(eq(r.accuracy, 0.75) && eq(r.macro_precision, 5.0 / 6.0) && eq(r.macro_recall, 0.75), "2-class macros");
    let f1 = (2.0 / 3.0 + 0.8) / 2.0;
    ensure!(eq(r.macro_f1, f1), "2-class F1 {} vs {f1}", r.macro_f1);

    let truth = ["a", "a", "a", "b", "b", "c", "c", "c"];
    let pred = ["a", "b", "a", "b", "c", "c", "c", "a"];
    let r = compute_metrics(&truth, &pred).map_err(|e| e.to_string())?;
    ensure!(r.confusion == vec![vec![2, 1, 0], vec![0, 1, 1], vec![1, 0, 2]], "3-class confusion");
    ensure!(eq(r.accuracy, 5.0 / 8.0), "3-class accuracy");
    let per = [2.0 / 3.0, 0.5, 2.0 / 3.0];
    for (c, want) in r.per_class.iter().zip(per) {
        ensure!(eq(c.precision, want) && eq(c.recall, want) && eq(c.f1, want), "3-class class {}", c.label);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let labels = ["p", "q", "r", "s", "t"];
    for i in 0..1000 {
        let n = rng.random_range(1..60);
        let k = rng.random_range(1..=labels.len());
        let truth: Vec<String> = (0..n).map(|_| labels[rng.random_range(0..k)].to_string()).collect();
        let pred: Vec<String> = (0..n).map(|_| labels[rng.random_range(0..k)].to_string()).collect();
        let r = compute_metrics(&truth, &pred).map_err(|e| e.to_string())?;
        let oracle = common::confusion_oracle(&r.classes, &truth, &pred);
        ensure!(r.confusion == oracle, "vector {i}: confusion differs from oracle");
        let trace: usize = (0..r.classes.len()).map(|j| oracle[j][j]).sum();
        ensure!(r.accuracy == trace as f64 / n as f64, "vector {i}: accuracy != trace/total");
    }
    Ok("hand examples exact, 1000 random vectors give accuracy = trace/total".into())
}

fn profile(counts: &[usize], seed: u64) -> LabeledDataset {
    let mut samples = Vec::new();
    for (c, &n) in counts.iter().enumerate() {
        for i in 0..n {
            samples.push(Sample::new(vec![c as f64, i as f64], format!("class{c:02}")));
        }
    }
    samples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    LabeledDataset::new(samples)
}

fn stratification() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let cfg = SplitConfig::default();
    for p in 0..50 {
        let k = rng.random_range(2..9);
        let counts: Vec<usize> = (0..k).map(|_| rng.random_range(10..41)).collect();
        let data = profile(&counts, p);
        let all: Vec<usize> = (0..data.len()).collect();

        let split = stratified_split(&data, &cfg).map_err(|e| e.to_string())?;
        let mut seen: Vec<usize> = split.train.iter().chain(&split.test).copied().collect();
        seen.sort();
        ensure!(seen == all, "profile {p}: split is not a partition");
        let mut per: BTreeMap<&str, usize> = BTreeMap::new();
        for &i in &split.test {
            *per.entry(data.samples[i].label.as_str()).or_default() += 1;
        }
        for (c, &n) in counts.iter().enumerate() {
            let want = ((6 * n + 10) / 20).max(1);
            let got = per.get(format!("class{c:02}").as_str()).copied().unwrap_or(0);
            ensure!(got == want, "profile {p}: class of {n} got {got} test items, want {want}");
        }

        let folds = stratified_kfold(&data, &cfg).map_err(|e| e.to_string())?;
        ensure!(folds.len() == cfg.folds, "profile {p}: {} folds", folds.len());
        let mut val: Vec<usize> = folds.iter().flat_map(|f| f.validation.iter().copied()).collect();
        val.sort();
        ensure!(val == all, "profile {p}: validation folds are not a partition");
        for c in 0..k {
            let label = format!("class{c:02}");
            let sizes: Vec<usize> = folds
                .iter()
                .map(|f| f.validation.iter().filter(|&&i| data.samples[i].label == label).count())
                .collect();
            let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
            ensure!(spread <= 1, "profile {p}: class {c} fold sizes {sizes:?}");
        }
    }
    Ok("50 profiles: partitions, half-up test counts, per-class fold spread <= 1".into())
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let raw = tmp.path().join("raw");
    write_synthetic_dataset(&raw, 10, 10, 160, 1).map_err(|e| e.to_string())?;
    let archive = tmp.path().join("archive");
    let manifest = ingest(&raw, &archive, &common::synthetic_detector(), MultiFacePolicy::Highest)
        .map_err(|e| e.to_string())?;
    ensure!(manifest.images.len() == 100, "ingested {}", manifest.images.len());
    let data = to_dataset(&embed_archive(&archive, &MockBackend::new(0)).map_err(|e| e.to_string())?);
    ensure!(data.len() == 100, "embedded {} faces", data.len());

    let split = SplitConfig::default();
    let train_cfg = TrainConfig::default();
    let (_, _, holdout) = holdout_evaluation(&data, &split, &train_cfg).map_err(|e| e.to_string())?;
    ensure!(holdout.accuracy >= MIN_ACCURACY, "test accuracy {}", holdout.accuracy);
    let cv = cross_validate(&data, &split, &train_cfg).map_err(|e| e.to_string())?;
    ensure!(cv.fold_accuracies.len() == 10, "{} folds", cv.fold_accuracies.len());
    ensure!(cv.mean_accuracy >= MIN_ACCURACY, "CV mean {}", cv.mean_accuracy);
    let t = within(start, E2E_BUDGET)?;
    Ok(format!(
        "10x10 synthetic: test accuracy {:.4}, 10-fold mean {:.4} (>= {MIN_ACCURACY}), {:.2}s",
        holdout.accuracy,
        cv.mean_accuracy,
        t.as_secs_f64()
    ))
}

fn store_contains(dir: &std::path::Path, needle: &[u8]) -> bool {
    std::fs::read_dir(dir).unwrap().any(|e| {
        let path = e.unwrap().path();
        path.is_file() && std::fs::read(path).unwrap().windows(needle.len()).any(|w| w == needle)
    })
}

fn auth_protocol() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let svc = common::open_service(dir, 0.0);
    let mut codes = Vec::new();
    for u in 0..5 {
        let e = svc.enroll(&common::user_email(u), &common::user_images(u, 0, 5)).map_err(|e| e.to_string())?;
        codes.push(e.code);
    }
    svc.retrain().map_err(|e| e.to_string())?;
    for u in 0..5 {
        let hit = svc.recognize(&common::user_images(u, 5, 1)[0]).map_err(|e| e.to_string())?;
        ensure!(hit.code == codes[u], "user {u} recognized as {}", hit.class_label);
        ensure!(svc.verify(&common::user_email(u), &hit.code.to_hex()).map_err(|e| e.to_string())?, "user {u} verify");
    }
    ensure!(!svc.verify(&common::user_email(0), &codes[1].to_hex()).map_err(|e| e.to_string())?, "wrong code accepted");
    ensure!(
        matches!(svc.verify("nobody@example.org", &codes[0].to_hex()), Err(AuthError::UnknownEmail)),
        "unknown email accepted"
    );
    for c in &codes {
        ensure!(!store_contains(dir, c.to_hex().as_bytes()) && !store_contains(dir, c.as_bytes()), "plaintext code in store");
    }
    drop(svc);

    let again = common::open_service(dir, 0.0);
    for u in 0..5 {
        ensure!(again.verify(&common::user_email(u), &codes[u].to_hex()).map_err(|e| e.to_string())?, "restart verify {u}");
    }
    drop(again);

    let store = UserStore::open(dir).map_err(|e| e.to_string())?;
    let email = common::user_email(2);
    let mut sealed = store.get(&email).ok_or("user missing")?.encrypted_code.clone();
    sealed.ciphertext[0] ^= 1;
    let key = MasterKey::from_hex(common::TEST_KEY_HEX).map_err(|e| e.to_string())?;
    ensure!(
        decrypt_code(&sealed, &key, email.as_bytes()) == Err(CryptoError::AuthenticationFailed),
        "tampered ciphertext decrypted"
    );
    let t = within(start, AUTH_BUDGET)?;
    Ok(format!("5 users enrolled, recognized, verified, survive restart, tamper rejected, {:.2}s", t.as_secs_f64()))
}

fn model_round_trip() -> Outcome {
    let data = common::embed_photos(&common::photos(4, 6, 11), 0);
    let model = train(&data.samples, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = tmp.path().join("model.fagm");
    save_model(&model, &path).map_err(|e| e.to_string())?;
    let back = load_model(&path).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for i in 0..100 {
        let raw: Vec<f64> = (0..EMBEDDING_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        let e = Embedding::from_raw(raw).map_err(|e| e.to_string())?;
        ensure!(
            back.decision_scores(e.as_slice()).ok() == model.decision_scores(e.as_slice()).ok(),
            "embedding {i}: scores differ after reload"
        );
    }
    let mut bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    std::fs::write(&path, &bytes).map_err(|e| e.to_string())?;
    ensure!(
        matches!(load_model(&path), Err(ClassifierError::ChecksumMismatch { .. })),
        "corrupted file loaded"
    );
    Ok("100 random embeddings score identically after reload, corrupted file rejected".into())
}

fn bias_audit() -> Outcome {
    let data = common::embed_photos(&common::photos(4, 10, 3), 0);
    let split = SplitConfig::default();
    let train_cfg = TrainConfig::default();
    let same = bias_report(&data, &data, &split, &train_cfg).map_err(|e| e.to_string())?;
    ensure!(same.deltas.as_array() == [0.0; 4], "self deltas {:?}", same.deltas.as_array());
    let shuffled = common::shuffle_labels(&data, 5);
    let contrast = bias_report(&data, &shuffled, &split, &train_cfg).map_err(|e| e.to_string())?;
    let d = contrast.deltas;
    ensure!(d.accuracy > 0.0, "contrast accuracy delta {}", d.accuracy);
    let a = &contrast.dataset_a;
    let b = &contrast.dataset_b;
    let cols = [
        (d.precision, a.macro_precision - b.macro_precision),
        (d.accuracy, a.accuracy - b.accuracy),
        (d.recall, a.macro_recall - b.macro_recall),
        (d.f1_score, a.macro_f1 - b.macro_f1),
    ];
    ensure!(cols.iter().all(|(x, y)| x == y), "delta columns do not match A - B");
    Ok(format!("self deltas zero, shuffled-label contrast accuracy delta {:+.4}", d.accuracy))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("nms-oracle", nms_matches_oracle),
        ("box-geometry", box_geometry),
        ("svm-trainer", svm_correctness),
        ("metrics-oracle", metrics_oracle),
        ("stratification", stratification),
        ("end-to-end-synthetic", end_to_end),
        ("auth-protocol", auth_protocol),
        ("model-file", model_round_trip),
        ("bias-audit", bias_audit),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {name:<22} {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name:<22} {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
