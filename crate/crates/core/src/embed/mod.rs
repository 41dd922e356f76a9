//! Text embeddings behind a provider contract.

mod hash;

use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

use crate::llm::{JsonlCache, Mode, Transport};

pub use hash::{fnv1a64, test_embed, word_tokens, HashProvider, SplitMix64, TokenHashProvider};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("embedding batch must be non-empty and contain no empty texts")]
    EmptyInput,
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cosine of a zero vector")]
    ZeroVector,
    #[error("embedding provider failure: {0}")]
    Provider(String),
    #[error("no cached embedding for {text:?} in replay mode")]
    CacheMiss { text: String },
}

/// Maps texts to fixed-dimension vectors. Implementations must be
/// deterministic for a fixed input.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    /// One vector per input text, index-aligned.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

pub(crate) fn check_batch(texts: &[String]) -> Result<(), EmbedError> {
    if texts.is_empty() || texts.iter().any(|t| t.is_empty()) {
        return Err(EmbedError::EmptyInput);
    }
    Ok(())
}

/// Cosine similarity clamped to [-1, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// `/embeddings` client with a text-keyed newline-JSON cache.
pub struct RemoteProvider {
    base_url: String,
    model: String,
    api_key: Option<String>,
    dimension: usize,
    mode: Mode,
    timeout: Duration,
    transport: Arc<dyn Transport>,
    cache: JsonlCache,
}

impl RemoteProvider {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        base_url: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        dimension: usize,
        mode: Mode,
        timeout: Duration,
        transport: Arc<dyn Transport>,
        cache: JsonlCache,
    ) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key,
            dimension,
            mode,
            timeout,
            transport,
            cache,
        }
    }

    fn key(&self, text: &str) -> String {
        crate::sha256_hex(format!("{}\u{0}{}", self.model, text).as_bytes())
    }

    fn cached(&self, text: &str) -> Option<Vec<f64>> {
        let v = self.cache.get(&self.key(text))?;
        serde_json::from_value(v.get("embedding")?.clone()).ok()
    }

    fn fetch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let url = format!("{}/embeddings", self.base_url.trim_end_matches('/'));
        let body = json!({"model": self.model, "input": texts});
        let resp = self
            .transport
            .post_json(&url, self.api_key.as_deref(), &body, self.timeout)
            .map_err(|e| EmbedError::Provider(e.to_string()))?;
        let data = resp
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| EmbedError::Provider("response has no data array".into()))?;
        if data.len() != texts.len() {
            return Err(EmbedError::Provider(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                data.len()
            )));
        }
        let mut out = vec![Vec::new(); texts.len()];
        for (pos, item) in data.iter().enumerate() {
            let idx = item.get("index").and_then(Value::as_u64).map(|i| i as usize).unwrap_or(pos);
            let vec: Vec<f64> = item
                .get("embedding")
                .cloned()
                .and_then(|v| serde_json::from_value(v).ok())
                .ok_or_else(|| EmbedError::Provider("item without embedding".into()))?;
            if vec.len() != self.dimension {
                return Err(EmbedError::DimensionMismatch {
                    expected: self.dimension,
                    got: vec.len(),
                });
            }
            if idx >= out.len() {
                return Err(EmbedError::Provider(format!("index {idx} out of range")));
            }
            out[idx] = vec;
        }
        Ok(out)
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn name(&self) -> &str {
        &self.model
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        check_batch(texts)?;
        let mut out: Vec<Option<Vec<f64>>> = texts.iter().map(|t| self.cached(t)).collect();
        let mut missing: Vec<String> = Vec::new();
        for (t, slot) in texts.iter().zip(&out) {
            if slot.is_none() && !missing.contains(t) {
                missing.push(t.clone());
            }
        }
        if !missing.is_empty() {
            if self.mode == Mode::Replay {
                return Err(EmbedError::CacheMiss { text: missing[0].clone() });
            }
            let fetched = self.fetch(&missing)?;
            for (text, vec) in missing.iter().zip(fetched) {
                if self.mode == Mode::Record {
                    self.cache
                        .insert(json!({"key": self.key(text), "model": self.model, "text": text, "embedding": vec}))
                        .map_err(|e| EmbedError::Provider(e.to_string()))?;
                }
                for (t, slot) in texts.iter().zip(out.iter_mut()) {
                    if t == text {
                        *slot = Some(vec.clone());
                    }
                }
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled above")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{OfflineTransport, TransportError};

    #[test]
    fn cosine_reference_cases() {
        let v = test_embed("v", 16);
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), -1.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(EmbedError::ZeroVector));
        assert!(matches!(cosine(&[1.0], &[1.0, 0.0]), Err(EmbedError::DimensionMismatch { .. })));
    }

    #[test]
    fn cosine_does_not_assume_unit_vectors() {
        assert!((cosine(&[3.0, 0.0], &[5.0, 5.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn batch_shape_and_alignment() {
        let p = HashProvider::new(384);
        let texts = vec!["a".to_string(), "b".to_string(), "a".to_string()];
        let out = p.embed_batch(&texts).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|v| v.len() == 384));
        assert_eq!(out[0], out[2]);
        assert_eq!(p.embed_batch(&[]), Err(EmbedError::EmptyInput));
        assert_eq!(p.embed_batch(&["".to_string()]), Err(EmbedError::EmptyInput));
    }

    struct FakeEmbeddings;

    impl Transport for FakeEmbeddings {
        fn post_json(&self, url: &str, _: Option<&str>, body: &Value, _: Duration) -> Result<Value, TransportError> {
            assert!(url.ends_with("/embeddings"));
            let data: Vec<Value> = body["input"]
                .as_array()
                .unwrap()
                .iter()
                .enumerate()
                .map(|(i, t)| json!({"index": i, "embedding": test_embed(t.as_str().unwrap(), 8)}))
                .collect();
            Ok(json!({"data": data}))
        }
    }

    #[test]
    fn remote_provider_records_and_replays() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.jsonl");
        let rec = RemoteProvider::new(
            "http://x",
            "m",
            None,
            8,
            Mode::Record,
            Duration::from_secs(1),
            Arc::new(FakeEmbeddings),
            JsonlCache::open(&path).unwrap(),
        );
        let texts = vec!["a".to_string(), "b".to_string(), "a".to_string()];
        let first = rec.embed_batch(&texts).unwrap();
        assert_eq!(first[0], test_embed("a", 8));
        assert_eq!(first[0], first[2]);

        let offline = Arc::new(OfflineTransport::default());
        let rep = RemoteProvider::new(
            "http://x",
            "m",
            None,
            8,
            Mode::Replay,
            Duration::from_secs(1),
            offline.clone(),
            JsonlCache::open(&path).unwrap(),
        );
        assert_eq!(rep.embed_batch(&texts).unwrap(), first);
        assert_eq!(offline.attempts(), 0);
        assert!(matches!(rep.embed_batch(&["zzz".to_string()]), Err(EmbedError::CacheMiss { .. })));
    }

    #[test]
    fn remote_dimension_is_checked() {
        let p = RemoteProvider::new(
            "http://x",
            "m",
            None,
            16,
            Mode::Live,
            Duration::from_secs(1),
            Arc::new(FakeEmbeddings),
            JsonlCache::in_memory(),
        );
        assert_eq!(
            p.embed_batch(&["a".to_string()]),
            Err(EmbedError::DimensionMismatch { expected: 16, got: 8 })
        );
    }
}
