//! TOML configuration shared by the CLI and the service.
//!
//! ```toml
//! [detector]
//! min_face_size = 20.0
//! thresholds = [0.6, 0.7, 0.7]
//!
//! [train]
//! hyper_c = 1.0
//!
//! [split]
//! test_fraction = 0.3
//! folds = 10
//!
//! [service]
//! listen = "127.0.0.1:8080"
//! store_dir = "store"
//! reject_margin = 0.0
//!
//! [backends]
//! detector = "synthetic"
//! embedder_seed = 0
//! ```
//!
//! Every section and field is optional.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::TrainConfig;
use crate::detector::synthetic::{SilentBackend, SyntheticBackend};
use crate::detector::{CascadeDetector, DetectError, DetectorConfig, FaceDetector, StageBackend};
use crate::embedder::{EmbedderBackend, MockBackend};
use crate::evaluation::SplitConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub detector: DetectorConfig,
    pub train: TrainConfig,
    pub split: SplitConfig,
    pub service: ServiceConfig,
    pub backends: BackendConfig,
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.detector.validate().map_err(|e| invalid(&e))?;
        self.train.validate().map_err(|e| invalid(&e))?;
        self.split.validate().map_err(|e| invalid(&e))?;
        self.service.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    /// Name of the environment variable holding the hex master key.
    pub master_key_env: String,
    /// Directory holding user records, embeddings and the model file.
    pub store_dir: PathBuf,
    /// Model file location; `<store_dir>/model.fagm` when unset.
    pub model_path: Option<PathBuf>,
    /// Minimum gap between the best and second-best class score for a
    /// recognition to be accepted. `0` accepts every prediction.
    pub reject_margin: f64,
    pub min_enroll_images: usize,
    /// Largest accepted request body, in bytes.
    pub max_body_bytes: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            master_key_env: "FACEAUTH_MASTER_KEY".into(),
            store_dir: PathBuf::from("faceauth-store"),
            model_path: None,
            reject_margin: 0.0,
            min_enroll_images: 3,
            max_body_bytes: 32 << 20,
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.reject_margin >= 0.0 && self.reject_margin.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "reject_margin must be a non-negative number, got {}",
                self.reject_margin
            )));
        }
        if self.min_enroll_images == 0 {
            return Err(ConfigError::Invalid("min_enroll_images must be at least 1".into()));
        }
        if self.master_key_env.is_empty() {
            return Err(ConfigError::Invalid("master_key_env is empty".into()));
        }
        Ok(())
    }

    pub fn model_path(&self) -> PathBuf {
        self.model_path
            .clone()
            .unwrap_or_else(|| self.store_dir.join("model.fagm"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorBackendKind {
    /// Finds the framed synthetic faces of [`crate::synth`].
    #[default]
    Synthetic,
    /// Never finds a face.
    Silent,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub detector: DetectorBackendKind,
    /// Seed of the mock embedding projection.
    pub embedder_seed: u64,
}

impl BackendConfig {
    pub fn stage_backend(&self) -> Box<dyn StageBackend> {
        match self.detector {
            DetectorBackendKind::Synthetic => Box::new(SyntheticBackend),
            DetectorBackendKind::Silent => Box::new(SilentBackend),
        }
    }

    pub fn face_detector(&self, cfg: &DetectorConfig) -> Result<Arc<dyn FaceDetector>, DetectError> {
        Ok(Arc::new(CascadeDetector::new(self.stage_backend(), cfg.clone())?))
    }

    pub fn embedder(&self) -> Arc<dyn EmbedderBackend> {
        Arc::new(MockBackend::new(self.embedder_seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = AppConfig::from_toml("").unwrap();
        assert_eq!(cfg, AppConfig::default());
        assert_eq!(cfg.train.hyper_c, 1.0);
        assert_eq!(cfg.split.test_fraction, 0.30);
        assert_eq!(cfg.split.folds, 10);
        assert_eq!(cfg.service.reject_margin, 0.0);
        assert_eq!(cfg.service.model_path(), PathBuf::from("faceauth-store/model.fagm"));
    }

    #[test]
    fn partial_sections_override() {
        let cfg = AppConfig::from_toml(
            "[split]\nfolds = 5\n[service]\nreject_margin = 0.2\n[backends]\ndetector = \"silent\"\n",
        )
        .unwrap();
        assert_eq!(cfg.split.folds, 5);
        assert_eq!(cfg.split.test_fraction, 0.30);
        assert_eq!(cfg.service.reject_margin, 0.2);
        assert_eq!(cfg.backends.detector, DetectorBackendKind::Silent);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(AppConfig::from_toml("[split]\nfolds = 1\n").is_err());
        assert!(AppConfig::from_toml("[service]\nreject_margin = -1.0\n").is_err());
        assert!(AppConfig::from_toml("[train]\nhyper_c = 0.0\n").is_err());
        assert!(AppConfig::from_toml("[service]\nlisten_addr = \"x\"\n").is_err());
    }
}
