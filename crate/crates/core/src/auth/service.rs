use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use super::crypto::{decrypt_code, encrypt_code, MasterKey, SecretCode};
use super::store::{StoreError, UserRecord, UserStore};
use super::AuthError;
use crate::classifier::{self, ClassifierError, SvmModel, TrainConfig};
use crate::config::ServiceConfig;
use crate::detector::{align_face, FaceDetector};
use crate::embedder::{embed, EmbedderBackend, Embedding, FACE_SIZE};
use crate::imaging::parse_data_uri;

/// Result of a successful enrollment. The plaintext code is returned here
/// exactly once and is not kept anywhere by the service.
#[derive(Debug)]
pub struct Enrollment {
    pub class_label: String,
    pub code: SecretCode,
}

#[derive(Debug)]
pub struct Recognition {
    pub class_label: String,
    pub code: SecretCode,
    /// Best minus second-best decision score.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrainSummary {
    pub classes: usize,
    pub samples: usize,
    pub training_accuracy: f64,
}

/// Enrollment, recognition and verification over one user store.
pub struct AuthService {
    detector: Arc<dyn FaceDetector>,
    embedder: Arc<dyn EmbedderBackend>,
    key: MasterKey,
    store: RwLock<UserStore>,
    model: RwLock<Option<Arc<SvmModel>>>,
    retrain_lock: Mutex<()>,
    model_path: PathBuf,
    train_cfg: TrainConfig,
    reject_margin: f64,
    min_images: usize,
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl AuthService {
    /// Opens the store in `cfg.store_dir` and loads the model file if one
    /// exists.
    pub fn open(
        cfg: &ServiceConfig,
        train_cfg: TrainConfig,
        detector: Arc<dyn FaceDetector>,
        embedder: Arc<dyn EmbedderBackend>,
        key: MasterKey,
    ) -> Result<Self, AuthError> {
        cfg.validate().map_err(|e| AuthError::InvalidRequest(e.to_string()))?;
        train_cfg.validate()?;
        let store = UserStore::open(&cfg.store_dir)?;
        let model_path = cfg.model_path();
        let model = if model_path.exists() {
            Some(Arc::new(classifier::load_model(&model_path)?))
        } else {
            None
        };
        log::info!(
            "store {} opened: {} users, model {}",
            cfg.store_dir.display(),
            store.len(),
            if model.is_some() { "loaded" } else { "absent" }
        );
        Ok(Self {
            detector,
            embedder,
            key,
            store: RwLock::new(store),
            model: RwLock::new(model),
            retrain_lock: Mutex::new(()),
            model_path,
            train_cfg,
            reject_margin: cfg.reject_margin,
            min_images: cfg.min_enroll_images,
        })
    }

    pub fn user_count(&self) -> usize {
        self.store.read().expect("store lock").len()
    }

    pub fn model(&self) -> Option<Arc<SvmModel>> {
        self.model.read().expect("model lock").clone()
    }

    /// Decodes an image, requires exactly one face and embeds it.
    /// `index` tags errors with the image's position in a request.
    fn embed_one(&self, uri: &str, index: Option<usize>) -> Result<Embedding, AuthError> {
        let img = parse_data_uri(uri).map_err(|e| AuthError::InvalidImage {
            index,
            detail: e.to_string(),
        })?;
        let faces = self.detector.detect(&img)?;
        let face = match faces.as_slice() {
            [] => return Err(AuthError::NoFaceFound { index }),
            [one] => one,
            many => {
                return Err(AuthError::MultipleFaces {
                    index,
                    count: many.len(),
                })
            }
        };
        let crop = align_face(&img, face, FACE_SIZE)?;
        Ok(embed(&crop, self.embedder.as_ref())?)
    }

    pub fn enroll(&self, email: &str, images: &[String]) -> Result<Enrollment, AuthError> {
        let email = email.trim();
        if email.is_empty() {
            return Err(AuthError::InvalidRequest("email is empty".into()));
        }
        if self.store.read().expect("store lock").get(email).is_some() {
            return Err(AuthError::AlreadyEnrolled);
        }
        if images.len() < self.min_images {
            return Err(AuthError::TooFewImages {
                got: images.len(),
                needed: self.min_images,
            });
        }
        let embeddings = images
            .iter()
            .enumerate()
            .map(|(i, uri)| self.embed_one(uri, Some(i)))
            .collect::<Result<Vec<_>, _>>()?;

        let code = SecretCode::generate()?;
        let encrypted_code = encrypt_code(&code, &self.key, email.as_bytes())?;
        let mut store = self.store.write().expect("store lock");
        let class_label = store.next_label();
        let record = UserRecord {
            email: email.to_string(),
            encrypted_code,
            class_label: class_label.clone(),
            enrolled_at: now_secs(),
            embedding_count: embeddings.len(),
        };
        store.insert(record, embeddings).map_err(|e| match e {
            StoreError::AlreadyEnrolled => AuthError::AlreadyEnrolled,
            other => other.into(),
        })?;
        log::info!("enrolled {class_label} with {} images", images.len());
        Ok(Enrollment { class_label, code })
    }

    /// Identifies the face in `image` and returns that user's code.
    pub fn recognize(&self, image: &str) -> Result<Recognition, AuthError> {
        let model = self.model().ok_or(AuthError::NoModel)?;
        let emb = self.embed_one(image, None)?;
        let scores = model.decision_scores(emb.as_slice())?;
        let best = model.predict_index(emb.as_slice())?;
        let runner_up = scores
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != best)
            .map(|(_, s)| *s)
            .fold(f64::NEG_INFINITY, f64::max);
        let margin = scores[best] - runner_up;
        if self.reject_margin > 0.0 && margin < self.reject_margin {
            log::info!("recognition rejected: margin {margin:.4} below {}", self.reject_margin);
            return Err(AuthError::NotRecognized);
        }
        let label = &model.classes()[best];
        let store = self.store.read().expect("store lock");
        let user = store.find_by_label(label).ok_or(AuthError::NotRecognized)?;
        let code = decrypt_code(&user.encrypted_code, &self.key, user.email.as_bytes())?;
        Ok(Recognition {
            class_label: label.clone(),
            code,
            margin,
        })
    }

    /// `Ok(true)` iff `code` matches the stored code of `email`. A malformed
    /// code is simply a mismatch.
    pub fn verify(&self, email: &str, code: &str) -> Result<bool, AuthError> {
        let store = self.store.read().expect("store lock");
        let user = store.get(email.trim()).ok_or(AuthError::UnknownEmail)?;
        let stored = decrypt_code(&user.encrypted_code, &self.key, user.email.as_bytes())?;
        Ok(match SecretCode::from_hex(code.trim()) {
            Ok(given) => given.ct_eq(&stored),
            Err(_) => false,
        })
    }

    /// Trains on every stored embedding, persists the model and swaps it in.
    pub fn retrain(&self) -> Result<RetrainSummary, AuthError> {
        let _guard = self.retrain_lock.lock().expect("retrain lock");
        let samples = self.store.read().expect("store lock").training_samples();
        let model = match classifier::train(&samples, &self.train_cfg) {
            Err(ClassifierError::SingleClass(_)) | Err(ClassifierError::EmptyDataset) => {
                return Err(AuthError::SingleClass {
                    users: self.user_count(),
                })
            }
            other => other?,
        };
        let correct = samples
            .iter()
            .filter(|s| model.predict(&s.features).map(|p| p == s.label).unwrap_or(false))
            .count();
        let summary = RetrainSummary {
            classes: model.classes().len(),
            samples: samples.len(),
            training_accuracy: correct as f64 / samples.len() as f64,
        };
        classifier::save_model(&model, &self.model_path)?;
        *self.model.write().expect("model lock") = Some(Arc::new(model));
        log::info!(
            "retrained on {} samples, {} classes, training accuracy {:.4}",
            summary.samples,
            summary.classes,
            summary.training_accuracy
        );
        Ok(summary)
    }
}
