//! Run configuration shared by every pipeline stage.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{EmbeddingProvider, HashProvider, RemoteProvider, TokenHashProvider};
use crate::kernel::KernelConfig;
use crate::llm::{Gateway, GatewayConfig, HttpTransport, JsonlCache, Mode, Transport};
use crate::schema::InduceConfig;
use crate::train::{LabelSet, TrainConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    /// One pseudo-random unit vector per distinct text.
    Hash,
    /// Sum of per-word pseudo-random vectors.
    TokenHash,
    /// An `/embeddings` endpoint.
    Remote,
}

impl FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hash" => Ok(ProviderKind::Hash),
            "token-hash" => Ok(ProviderKind::TokenHash),
            "remote" => Ok(ProviderKind::Remote),
            other => Err(format!("unknown embedding provider {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub provider: ProviderKind,
    pub dimension: usize,
    /// Model name sent to a remote provider.
    pub model: String,
    /// Remote endpoint; `LLM_BASE_URL` is used when empty.
    pub base_url: String,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::TokenHash,
            dimension: 384,
            model: "all-MiniLM-L6-v2".to_string(),
            base_url: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaConfig {
    pub k_grid: Vec<usize>,
    /// Maximum number of nodes in one filter; at most `kernel.n_filt`.
    pub size_cap: usize,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        Self {
            k_grid: InduceConfig::default().k_grid,
            size_cap: KernelConfig::default().n_filt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// Initialize layer-0 filters randomly instead of from the schema graph.
    RandomFilters,
    /// Do not link predicates to their schema nodes.
    SkipAugmentation,
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random-filters" => Ok(Ablation::RandomFilters),
            "skip-augmentation" => Ok(Ablation::SkipAugmentation),
            other => Err(format!("unknown ablation {other:?} (expected random-filters or skip-augmentation)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    pub random_filters: bool,
    pub skip_augmentation: bool,
}

impl AblationFlags {
    pub fn set(&mut self, a: Ablation) {
        match a {
            Ablation::RandomFilters => self.random_filters = true,
            Ablation::SkipAugmentation => self.skip_augmentation = true,
        }
    }
}

/// Everything a run depends on. Loaded from TOML; command-line flags are
/// applied on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub mode: Mode,
    /// Directory holding `llm_cache.jsonl` and `embedding_cache.jsonl`.
    pub cache_dir: PathBuf,
    pub labels: LabelSet,
    pub llm: GatewayConfig,
    pub embedding: EmbeddingConfig,
    pub schema: SchemaConfig,
    pub kernel: KernelConfig,
    pub train: TrainConfig,
    pub ablation: AblationFlags,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 13,
            mode: Mode::Replay,
            cache_dir: PathBuf::from("cache"),
            labels: LabelSet::FavorAgainstNone,
            llm: GatewayConfig::default(),
            embedding: EmbeddingConfig::default(),
            schema: SchemaConfig::default(),
            kernel: KernelConfig::default(),
            train: TrainConfig::default(),
            ablation: AblationFlags::default(),
        }
    }
}

pub const LLM_CACHE_FILE: &str = "llm_cache.jsonl";
pub const EMBEDDING_CACHE_FILE: &str = "embedding_cache.jsonl";

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Self::parse_toml(text, "<config>")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::parse_toml(&text, &path.display().to_string())?;
        // A relative cache directory is taken relative to the config file.
        if cfg.cache_dir.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.cache_dir = parent.join(&cfg.cache_dir);
            }
        }
        Ok(cfg)
    }

    fn parse_toml(text: &str, path: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.kernel.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.kernel.classes != 3 {
            return Err(ConfigError::Invalid("kernel.classes must be 3 for the supported label sets".into()));
        }
        if self.embedding.dimension == 0 {
            return Err(ConfigError::Invalid("embedding.dimension must be positive".into()));
        }
        if self.schema.k_grid.is_empty() {
            return Err(ConfigError::Invalid("schema.k_grid is empty".into()));
        }
        if self.schema.size_cap == 0 || self.schema.size_cap > self.kernel.n_filt {
            return Err(ConfigError::Invalid(format!(
                "schema.size_cap {} must be in 1..={} (kernel.n_filt)",
                self.schema.size_cap, self.kernel.n_filt
            )));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form (sorted keys, compact). The mode
    /// and cache directory are left out: they change where answers come
    /// from, not what they are.
    pub fn fingerprint(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("mode");
            map.remove("cache_dir");
        }
        crate::sha256_hex(value.to_string().as_bytes())
    }

    pub fn induce_config(&self) -> InduceConfig {
        InduceConfig {
            k_grid: self.schema.k_grid.clone(),
            seed: self.seed,
        }
    }

    pub fn llm_cache_path(&self) -> PathBuf {
        self.cache_dir.join(LLM_CACHE_FILE)
    }

    /// Gateway over the configured transport and the run's cache file.
    pub fn gateway_with(&self, transport: Arc<dyn Transport>) -> Result<Gateway, ConfigError> {
        let cache = if self.mode == Mode::Live {
            JsonlCache::in_memory()
        } else {
            let path = self.llm_cache_path();
            JsonlCache::open(&path).map_err(|source| ConfigError::Io {
                path: path.display().to_string(),
                source,
            })?
        };
        Ok(Gateway::new(self.llm.clone().with_env(), self.mode, transport, cache))
    }

    pub fn gateway(&self) -> Result<Gateway, ConfigError> {
        self.gateway_with(Arc::new(HttpTransport))
    }

    pub fn embedder(&self) -> Result<Box<dyn EmbeddingProvider>, ConfigError> {
        let d = self.embedding.dimension;
        Ok(match self.embedding.provider {
            ProviderKind::Hash => Box::new(HashProvider::new(d)),
            ProviderKind::TokenHash => Box::new(TokenHashProvider::new(d)),
            ProviderKind::Remote => {
                let llm = self.llm.clone().with_env();
                let base_url = if self.embedding.base_url.is_empty() {
                    llm.base_url.clone()
                } else {
                    self.embedding.base_url.clone()
                };
                let cache = if self.mode == Mode::Live {
                    JsonlCache::in_memory()
                } else {
                    let path = self.cache_dir.join(EMBEDDING_CACHE_FILE);
                    JsonlCache::open(&path).map_err(|source| ConfigError::Io {
                        path: path.display().to_string(),
                        source,
                    })?
                };
                Box::new(RemoteProvider::new(
                    base_url,
                    self.embedding.model.clone(),
                    llm.api_key,
                    d,
                    self.mode,
                    Duration::from_secs(llm.timeout_secs),
                    Arc::new(HttpTransport),
                    cache,
                ))
            }
        })
    }
}
