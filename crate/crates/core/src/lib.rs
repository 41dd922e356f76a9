//! Schema-guided graph-kernel stance detection.

pub mod config;
pub mod embed;
pub mod fol;
pub mod llm;
pub mod kernel;
pub mod pipeline;
pub mod schema;
pub mod synthetic;
pub mod train;

pub use config::{Ablation, RunConfig};
pub use fol::{FolGraph, Predicate};
pub use kernel::{Checkpoint, KernelConfig, ModelParams};
pub use schema::SchemaLibrary;
pub use train::{LabelSet, LabeledExample};

use sha2::{Digest, Sha256};

/// Lower-case hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
