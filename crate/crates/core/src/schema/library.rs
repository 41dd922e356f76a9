use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{extract_filters, nearest, SchemaEdge, SchemaError, SchemaFilter, SchemaGraph, SchemaNode};

pub const LIBRARY_VERSION: u32 = 1;

/// The induced schema graph plus everything needed to reuse it: centroids
/// for assigning new predicates, the seed, and provenance fingerprints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaLibrary {
    pub version: u32,
    /// Embedding dimension.
    pub d: usize,
    pub seed: u64,
    pub k: usize,
    /// Silhouette score per candidate K.
    pub k_scores: Vec<(usize, f64)>,
    pub nodes: Vec<SchemaNode>,
    pub edges: Vec<SchemaEdge>,
    pub config_fingerprint: String,
    pub llm_model: String,
    pub embedding_provider: String,
}

fn format_err(path: impl Into<String>, message: impl Into<String>) -> SchemaError {
    SchemaError::Format {
        path: path.into(),
        message: message.into(),
    }
}

impl SchemaLibrary {
    pub fn graph(&self) -> SchemaGraph {
        SchemaGraph {
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
        }
    }

    pub fn filters(&self, n_filters: usize, hop: usize, size_cap: usize) -> Result<Vec<SchemaFilter>, SchemaError> {
        extract_filters(&self.graph(), n_filters, hop, size_cap)
    }

    /// Closest schema node (by centroid) for an embedding; ties to the smaller id.
    pub fn assign(&self, embedding: &[f64]) -> Result<usize, SchemaError> {
        if embedding.len() != self.d {
            return Err(SchemaError::DimensionMismatch {
                expected: self.d,
                got: embedding.len(),
            });
        }
        let centroids: Vec<Vec<f64>> = self.nodes.iter().map(|n| n.centroid.clone()).collect();
        Ok(self.nodes[nearest(embedding, &centroids)].id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("library serializes")
    }

    /// SHA-256 of the serialized library.
    pub fn fingerprint(&self) -> String {
        crate::sha256_hex(self.to_json().as_bytes())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SchemaError> {
        let mut text = self.to_json();
        text.push('\n');
        fs::write(path, text).map_err(|e| SchemaError::Io(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SchemaError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| SchemaError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        let value: Value = serde_json::from_str(text).map_err(|e| format_err(".", e.to_string()))?;
        match value.get("version").and_then(Value::as_u64) {
            Some(v) if v == LIBRARY_VERSION as u64 => {}
            Some(v) => {
                return Err(format_err(
                    "version",
                    format!("file has version {v}, this build reads version {LIBRARY_VERSION}"),
                ))
            }
            None => return Err(format_err("version", "missing or not an integer")),
        }
        let lib: SchemaLibrary =
            serde_path_to_error::deserialize(value).map_err(|e| format_err(e.path().to_string(), e.inner().to_string()))?;
        lib.validate()?;
        Ok(lib)
    }

    fn validate(&self) -> Result<(), SchemaError> {
        if self.nodes.is_empty() {
            return Err(format_err("nodes", "library has no nodes"));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(format_err(format!("nodes[{i}].id"), format!("expected {i}, found {}", n.id)));
            }
            if n.members.is_empty() || n.member_count != n.members.len() {
                return Err(format_err(
                    format!("nodes[{i}].member_count"),
                    format!("{} does not match {} members", n.member_count, n.members.len()),
                ));
            }
            if n.summary.trim().is_empty() {
                return Err(format_err(format!("nodes[{i}].summary"), "empty summary"));
            }
            if n.centroid.len() != self.d {
                return Err(format_err(format!("nodes[{i}].centroid"), format!("length {} != d {}", n.centroid.len(), self.d)));
            }
            if !n.summary_embedding.is_empty() && n.summary_embedding.len() != self.d {
                return Err(format_err(
                    format!("nodes[{i}].summary_embedding"),
                    format!("length {} != d {}", n.summary_embedding.len(), self.d),
                ));
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.src >= self.nodes.len() || e.dst >= self.nodes.len() || e.src == e.dst {
                return Err(format_err(format!("edges[{i}]"), format!("bad endpoints {} -> {}", e.src, e.dst)));
            }
            if !(e.weight > 0.0 && e.weight <= 1.0) {
                return Err(format_err(format!("edges[{i}].weight"), format!("{} outside (0, 1]", e.weight)));
            }
        }
        Ok(())
    }
}
