//! Enrollment, face login and code verification.
//!
//! A user enrolls with an email and a few face images. The service embeds
//! the faces, stores the embeddings under a fresh class label, and hands back
//! a random secret code which is kept only in encrypted form. Logging in is
//! two calls: `recognize` maps a face image to the matching user's code,
//! `verify` checks an (email, code) pair.

pub mod crypto;
pub mod http;
mod service;
pub mod store;

use thiserror::Error;

pub use self::crypto::{decrypt_code, encrypt_code, CryptoError, EncryptedCode, MasterKey, SecretCode};
pub use self::service::{AuthService, Enrollment, Recognition, RetrainSummary};
pub use self::store::{StoreError, UserRecord, UserStore};

use crate::classifier::ClassifierError;
use crate::detector::DetectError;
use crate::embedder::EmbedError;

#[derive(Debug, Error)]
pub enum AuthError {
    #[error("email already enrolled")]
    AlreadyEnrolled,
    #[error("{got} images supplied, at least {needed} required")]
    TooFewImages { got: usize, needed: usize },
    #[error("image could not be decoded: {detail}")]
    InvalidImage { index: Option<usize>, detail: String },
    #[error("no face found in image")]
    NoFaceFound { index: Option<usize> },
    #[error("{count} faces found, expected one")]
    MultipleFaces { index: Option<usize>, count: usize },
    #[error("no trained model yet")]
    NoModel,
    #[error("face not recognised")]
    NotRecognized,
    #[error("unknown email")]
    UnknownEmail,
    #[error("training needs at least two enrolled users, have {users}")]
    SingleClass { users: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

impl AuthError {
    /// Stable machine-readable code used in HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            AuthError::AlreadyEnrolled => "already_enrolled",
            AuthError::TooFewImages { .. } => "too_few_images",
            AuthError::InvalidImage { .. } => "invalid_image",
            AuthError::NoFaceFound { .. } => "no_face_found",
            AuthError::MultipleFaces { .. } => "multiple_faces",
            AuthError::NoModel => "no_model",
            AuthError::NotRecognized => "not_recognized",
            AuthError::UnknownEmail => "authentication_failed",
            AuthError::SingleClass { .. } => "single_class",
            AuthError::InvalidRequest(_) => "invalid_request",
            AuthError::Crypto(CryptoError::AuthenticationFailed) => "integrity_failure",
            AuthError::Crypto(_)
            | AuthError::Store(_)
            | AuthError::Detect(_)
            | AuthError::Embed(_)
            | AuthError::Classifier(_) => "internal",
        }
    }

    /// Position of the offending image within the request, if any.
    pub fn image_index(&self) -> Option<usize> {
        match self {
            AuthError::InvalidImage { index, .. }
            | AuthError::NoFaceFound { index }
            | AuthError::MultipleFaces { index, .. } => *index,
            _ => None,
        }
    }
}
