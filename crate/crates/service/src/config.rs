use std::fs;
use std::path::{Path, PathBuf};

use feedmatch::corpus::DEFAULT_MIN_WORDS;
use feedmatch::embedding::BackendConfig;
use feedmatch::matcher::{DEFAULT_K, DEFAULT_THRESHOLD};
use serde::{Deserialize, Serialize};

/// Service configuration, read from TOML or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    pub backend: BackendConfig,
    /// Perceptron model file; the bundled English model when absent.
    pub tagger_model_path: Option<PathBuf>,
    pub default_k: usize,
    pub default_threshold: f64,
    pub bind: String,
    /// Holds the event log, the loaded corpus and the embedding cache.
    pub data_dir: PathBuf,
    /// Reviews shorter than this are not classified.
    pub min_words: usize,
    /// External classifier; the keyword heuristic when absent.
    pub classifier_endpoint: Option<String>,
    /// Static files served for paths no endpoint claims.
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            backend: BackendConfig::default(),
            tagger_model_path: None,
            default_k: DEFAULT_K,
            default_threshold: DEFAULT_THRESHOLD,
            bind: "127.0.0.1:8740".to_string(),
            data_dir: PathBuf::from("feedmatch-data"),
            min_words: DEFAULT_MIN_WORDS,
            classifier_endpoint: None,
            ui_dir: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl ServiceConfig {
    /// `.json` files are read as JSON, anything else as TOML. Relative
    /// paths are resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let err = |message: String| ConfigError::Read {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut config: ServiceConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| err(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| err(e.to_string()))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.data_dir);
        if let Some(p) = config.tagger_model_path.as_mut() {
            resolve(p);
        }
        if let Some(p) = config.backend.path.as_mut() {
            resolve(p);
        }
        if let Some(p) = config.ui_dir.as_mut() {
            resolve(p);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.default_k == 0 {
            return Err(ConfigError::Invalid("default_k must be at least 1".into()));
        }
        if !(-1.0..=1.0).contains(&self.default_threshold) {
            return Err(ConfigError::Invalid(format!(
                "default_threshold {} is outside [-1, 1]",
                self.default_threshold
            )));
        }
        Ok(())
    }
}
