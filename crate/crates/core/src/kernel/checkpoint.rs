use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{KernelConfig, KernelError, ModelParams};

pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model with the hyperparameters and provenance needed to use it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub kernel: KernelConfig,
    /// Input embedding dimension.
    pub d: usize,
    /// Class names, index-aligned with the model outputs.
    pub labels: Vec<String>,
    /// Fingerprint of the schema library the filters came from; `None` for
    /// randomly initialized filters.
    pub library_fingerprint: Option<String>,
    pub config_fingerprint: String,
    pub seed: u64,
    pub params: ModelParams,
}

fn format_err(path: impl Into<String>, message: impl Into<String>) -> KernelError {
    KernelError::Format {
        path: path.into(),
        message: message.into(),
    }
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), KernelError> {
        let mut text = self.to_json();
        text.push('\n');
        fs::write(path, text).map_err(|e| KernelError::Io(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KernelError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| KernelError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, KernelError> {
        let value: Value = serde_json::from_str(text).map_err(|e| format_err(".", e.to_string()))?;
        match value.get("version").and_then(Value::as_u64) {
            Some(v) if v == CHECKPOINT_VERSION as u64 => {}
            Some(v) => {
                return Err(format_err(
                    "version",
                    format!("file has version {v}, this build reads version {CHECKPOINT_VERSION}"),
                ))
            }
            None => return Err(format_err("version", "missing or not an integer")),
        }
        let ck: Checkpoint =
            serde_path_to_error::deserialize(value).map_err(|e| format_err(e.path().to_string(), e.inner().to_string()))?;
        if ck.params.layers.len() != ck.kernel.layers {
            return Err(format_err("params.layers", "layer count does not match kernel.layers"));
        }
        Ok(ck)
    }

    /// Refuses a library other than the one the model was trained with,
    /// unless `force` is set.
    pub fn check_library(&self, library_fingerprint: Option<&str>, force: bool) -> Result<(), KernelError> {
        if force || self.library_fingerprint.as_deref() == library_fingerprint {
            return Ok(());
        }
        Err(KernelError::FingerprintMismatch {
            expected: self.library_fingerprint.clone().unwrap_or_else(|| "<none>".into()),
            got: library_fingerprint.unwrap_or("<none>").to_string(),
        })
    }
}
