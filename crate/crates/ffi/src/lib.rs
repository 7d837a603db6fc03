//! C ABI over the `faceauth` model file, mock embedder and synthetic
//! detector.
//!
//! Conventions:
//!
//! * every fallible call returns an [`FaStatus`]; `FA_STATUS_OK` is 0,
//! * objects are opaque handles created by `fa_*_new` / `fa_*_load` and
//!   released by the matching `fa_*_free` (null is accepted and ignored),
//! * results go through caller-provided out-pointers,
//! * after a failure, [`fa_last_error`] returns a message for the calling
//!   thread.
//!
//! The header `include/faceauth.h` is regenerated by the build script.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use faceauth::classifier::{self, ClassifierError, SvmModel};
use faceauth::detector::synthetic::SyntheticBackend;
use faceauth::detector::{detect_faces, DetectError, DetectorConfig};
use faceauth::embedder::{embed, EmbedError, MockBackend, EMBEDDING_DIM, FACE_SIZE};
use faceauth::imaging::Image;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    CorruptModel = 4,
    DimensionMismatch = 5,
    BufferTooSmall = 6,
    ImageTooSmall = 7,
    Internal = 99,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("NUL bytes removed"));
}

fn fail(status: FaStatus, msg: impl Into<String>) -> FaStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning panics into `FA_STATUS_INTERNAL`.
fn guard(f: impl FnOnce() -> FaStatus) -> FaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(FaStatus::Internal, "panic inside faceauth"),
    }
}

fn classifier_status(e: &ClassifierError) -> FaStatus {
    match e {
        ClassifierError::IoFailure(_) => FaStatus::Io,
        ClassifierError::ChecksumMismatch { .. } | ClassifierError::FormatVersionMismatch(_) => {
            FaStatus::CorruptModel
        }
        ClassifierError::DimensionMismatch { .. } => FaStatus::DimensionMismatch,
        _ => FaStatus::InvalidArgument,
    }
}

/// Message describing the last failure on the calling thread; empty if
/// none. Valid until the next faceauth call on the same thread.
#[no_mangle]
pub extern "C" fn fa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Dimension of embeddings produced by [`fa_embed_face_rgb`].
#[no_mangle]
pub extern "C" fn fa_embedding_dim() -> usize {
    EMBEDDING_DIM
}

/// Side of the square RGB face crop expected by [`fa_embed_face_rgb`].
#[no_mangle]
pub extern "C" fn fa_face_size() -> u32 {
    FACE_SIZE
}

// ---- model ----

/// A loaded one-vs-rest linear SVM.
pub struct FaModel {
    inner: SvmModel,
}

/// Loads a model file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fa_model_load(path: *const c_char, out: *mut *mut FaModel) -> FaStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(FaStatus::NullPointer, "path and out must not be null");
        }
        *out = std::ptr::null_mut();
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(FaStatus::InvalidArgument, "path is not UTF-8");
        };
        match classifier::load_model(Path::new(path)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(FaModel { inner }));
                FaStatus::Ok
            }
            Err(e) => fail(classifier_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `model` must be null or a handle from [`fa_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fa_model_free(model: *mut FaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of classes; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fa_model_num_classes(model: *const FaModel) -> usize {
    model.as_ref().map(|m| m.inner.classes().len()).unwrap_or(0)
}

/// Feature dimension; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fa_model_dim(model: *const FaModel) -> usize {
    model.as_ref().map(|m| m.inner.dim()).unwrap_or(0)
}

/// Copies the label of class `index` into `buf` as a NUL-terminated
/// string. `needed` receives the buffer size required (label bytes + 1);
/// if `buf_len` is smaller, nothing is written and
/// `FA_STATUS_BUFFER_TOO_SMALL` is returned.
///
/// # Safety
/// `model` must be a live handle, `buf` valid for `buf_len` bytes (or null
/// with `buf_len` 0), and `needed` null or valid.
#[no_mangle]
pub unsafe extern "C" fn fa_model_class_label(
    model: *const FaModel,
    index: usize,
    buf: *mut c_char,
    buf_len: usize,
    needed: *mut usize,
) -> FaStatus {
    guard(|| {
        let Some(model) = model.as_ref() else {
            return fail(FaStatus::NullPointer, "model is null");
        };
        let Some(label) = model.inner.classes().get(index) else {
            return fail(FaStatus::InvalidArgument, format!("class index {index} out of range"));
        };
        let size = label.len() + 1;
        if !needed.is_null() {
            *needed = size;
        }
        if buf.is_null() || buf_len < size {
            return fail(FaStatus::BufferTooSmall, format!("label needs {size} bytes"));
        }
        std::ptr::copy_nonoverlapping(label.as_ptr(), buf.cast::<u8>(), label.len());
        *buf.add(label.len()) = 0;
        FaStatus::Ok
    })
}

unsafe fn features<'a>(model: &FaModel, x: *const f64, len: usize) -> Result<&'a [f64], FaStatus> {
    if x.is_null() {
        return Err(fail(FaStatus::NullPointer, "features pointer is null"));
    }
    if len != model.inner.dim() {
        return Err(fail(
            FaStatus::DimensionMismatch,
            format!("expected {} features, got {len}", model.inner.dim()),
        ));
    }
    Ok(std::slice::from_raw_parts(x, len))
}

/// Writes one decision score per class into `scores`.
///
/// # Safety
/// `model` must be a live handle, `x` valid for `len` reads and `scores`
/// valid for `scores_len` writes.
#[no_mangle]
pub unsafe extern "C" fn fa_model_scores(
    model: *const FaModel,
    x: *const f64,
    len: usize,
    scores: *mut f64,
    scores_len: usize,
) -> FaStatus {
    guard(|| {
        let Some(model) = model.as_ref() else {
            return fail(FaStatus::NullPointer, "model is null");
        };
        let x = match features(model, x, len) {
            Ok(x) => x,
            Err(s) => return s,
        };
        if scores.is_null() {
            return fail(FaStatus::NullPointer, "scores pointer is null");
        }
        let k = model.inner.classes().len();
        if scores_len < k {
            return fail(FaStatus::BufferTooSmall, format!("{k} scores needed"));
        }
        match model.inner.decision_scores(x) {
            Ok(s) => {
                std::slice::from_raw_parts_mut(scores, k).copy_from_slice(&s);
                FaStatus::Ok
            }
            Err(e) => fail(classifier_status(&e), e.to_string()),
        }
    })
}

/// Index of the predicted class (highest score, first on ties).
///
/// # Safety
/// `model` must be a live handle, `x` valid for `len` reads, `class_index`
/// valid.
#[no_mangle]
pub unsafe extern "C" fn fa_model_predict(
    model: *const FaModel,
    x: *const f64,
    len: usize,
    class_index: *mut usize,
) -> FaStatus {
    guard(|| {
        let Some(model) = model.as_ref() else {
            return fail(FaStatus::NullPointer, "model is null");
        };
        if class_index.is_null() {
            return fail(FaStatus::NullPointer, "class_index is null");
        }
        let x = match features(model, x, len) {
            Ok(x) => x,
            Err(s) => return s,
        };
        match model.inner.predict_index(x) {
            Ok(i) => {
                *class_index = i;
                FaStatus::Ok
            }
            Err(e) => fail(classifier_status(&e), e.to_string()),
        }
    })
}

// ---- embedder ----

/// The seeded mock embedding backend.
pub struct FaEmbedder {
    inner: MockBackend,
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fa_embedder_new_mock(seed: u64, out: *mut *mut FaEmbedder) -> FaStatus {
    guard(|| {
        if out.is_null() {
            return fail(FaStatus::NullPointer, "out is null");
        }
        *out = Box::into_raw(Box::new(FaEmbedder {
            inner: MockBackend::new(seed),
        }));
        FaStatus::Ok
    })
}

/// # Safety
/// `embedder` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fa_embedder_free(embedder: *mut FaEmbedder) {
    if !embedder.is_null() {
        drop(Box::from_raw(embedder));
    }
}

unsafe fn rgb_image(pixels: *const u8, width: u32, height: u32) -> Result<Image, FaStatus> {
    if pixels.is_null() {
        return Err(fail(FaStatus::NullPointer, "pixels pointer is null"));
    }
    let len = width as usize * height as usize * 3;
    Image::new(width, height, std::slice::from_raw_parts(pixels, len).to_vec())
        .map_err(|e| fail(FaStatus::InvalidArgument, e.to_string()))
}

/// Embeds a `fa_face_size()`-square RGB crop (row-major, 3 bytes per
/// pixel) into `fa_embedding_dim()` unit-norm values.
///
/// # Safety
/// `pixels` must be valid for `width * height * 3` reads and `out` for
/// `out_len` writes.
#[no_mangle]
pub unsafe extern "C" fn fa_embed_face_rgb(
    embedder: *const FaEmbedder,
    pixels: *const u8,
    width: u32,
    height: u32,
    out: *mut f64,
    out_len: usize,
) -> FaStatus {
    guard(|| {
        let Some(embedder) = embedder.as_ref() else {
            return fail(FaStatus::NullPointer, "embedder is null");
        };
        if out.is_null() {
            return fail(FaStatus::NullPointer, "out is null");
        }
        if out_len < EMBEDDING_DIM {
            return fail(FaStatus::BufferTooSmall, format!("{EMBEDDING_DIM} values needed"));
        }
        let img = match rgb_image(pixels, width, height) {
            Ok(i) => i,
            Err(s) => return s,
        };
        match embed(&img, &embedder.inner) {
            Ok(e) => {
                std::slice::from_raw_parts_mut(out, EMBEDDING_DIM).copy_from_slice(e.as_slice());
                FaStatus::Ok
            }
            Err(e @ EmbedError::WrongShape { .. }) => fail(FaStatus::InvalidArgument, e.to_string()),
            Err(e) => fail(FaStatus::Internal, e.to_string()),
        }
    })
}

// ---- detector ----

/// One detected face; landmarks are five x's followed by five y's.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FaDetection {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub confidence: f64,
    pub landmarks: [f64; 10],
}

/// The cascade with the synthetic stage backend and default settings.
pub struct FaDetector {
    config: DetectorConfig,
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fa_detector_new_synthetic(min_face_size: f64, out: *mut *mut FaDetector) -> FaStatus {
    guard(|| {
        if out.is_null() {
            return fail(FaStatus::NullPointer, "out is null");
        }
        let config = DetectorConfig {
            min_face_size,
            ..DetectorConfig::default()
        };
        if let Err(e) = config.validate() {
            return fail(FaStatus::InvalidArgument, e.to_string());
        }
        *out = Box::into_raw(Box::new(FaDetector { config }));
        FaStatus::Ok
    })
}

/// # Safety
/// `detector` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fa_detector_free(detector: *mut FaDetector) {
    if !detector.is_null() {
        drop(Box::from_raw(detector));
    }
}

/// Detects faces in an RGB image. `count` receives the number of faces
/// found; at most `capacity` are written to `out`, highest confidence
/// first. Finding more faces than `capacity` is not an error.
///
/// # Safety
/// `pixels` must be valid for `width * height * 3` reads, `out` for
/// `capacity` writes (or null with capacity 0), `count` valid.
#[no_mangle]
pub unsafe extern "C" fn fa_detect_rgb(
    detector: *const FaDetector,
    pixels: *const u8,
    width: u32,
    height: u32,
    out: *mut FaDetection,
    capacity: usize,
    count: *mut usize,
) -> FaStatus {
    guard(|| {
        let Some(detector) = detector.as_ref() else {
            return fail(FaStatus::NullPointer, "detector is null");
        };
        if count.is_null() || (out.is_null() && capacity > 0) {
            return fail(FaStatus::NullPointer, "count and out must not be null");
        }
        let img = match rgb_image(pixels, width, height) {
            Ok(i) => i,
            Err(s) => return s,
        };
        let found = match detect_faces(&img, &SyntheticBackend, &detector.config) {
            Ok(f) => f,
            Err(e @ DetectError::ImageTooSmall { .. }) => return fail(FaStatus::ImageTooSmall, e.to_string()),
            Err(e) => return fail(FaStatus::Internal, e.to_string()),
        };
        *count = found.len();
        for (i, d) in found.iter().take(capacity).enumerate() {
            let mut landmarks = [0.0; 10];
            for (k, p) in d.landmarks.iter().enumerate() {
                landmarks[k] = p.x;
                landmarks[k + 5] = p.y;
            }
            *out.add(i) = FaDetection {
                x1: d.bbox.x1,
                y1: d.bbox.y1,
                x2: d.bbox.x2,
                y2: d.bbox.y2,
                confidence: d.confidence,
                landmarks,
            };
        }
        FaStatus::Ok
    })
}
