//! Schema induction: pool predicates, cluster them, summarize clusters into
//! schema phrases, link schemas by the logical relations their members take
//! part in, and cut kernel filters out of the resulting graph.

mod filters;
mod graph;
mod induce;
mod kmeans;
mod library;
mod silhouette;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::embed::EmbedError;
use crate::fol::{FolGraph, NodeKind};

pub use filters::{extract_filters, SchemaFilter};
pub use graph::{build_schema_graph, SchemaEdge, SchemaGraph, SchemaNode};
pub use induce::{abstract_clusters, clean_summary, induce, InduceConfig};
pub use kmeans::{assign_to_cluster, kmeans, nearest, ClusteringResult, MAX_ITERATIONS};
pub use library::{SchemaLibrary, LIBRARY_VERSION};
pub use silhouette::{select_k, silhouette, KSelection};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("no predicates in the corpus")]
    EmptyCorpus,
    #[error("K = {k} is invalid for {n} points")]
    InvalidK { k: usize, n: usize },
    #[error("silhouette needs at least two non-empty clusters")]
    SingleCluster,
    #[error("{points} points but {assignments} assignments")]
    LengthMismatch { points: usize, assignments: usize },
    #[error("predicate {0:?} has no cluster assignment")]
    UnassignedPredicate(String),
    #[error("requested {requested} filters from a schema graph with {available} nodes")]
    InvalidFilterCount { requested: usize, available: usize },
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("predicate {0:?} has no embedding")]
    MissingEmbedding(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("schema library format error at {path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Pools the predicate nodes of every graph, deduplicated by canonical
/// string and sorted lexicographically. When a string occurs more than once
/// the first embedding seen (in corpus order) is kept.
pub fn collect_predicates(corpus: &[FolGraph]) -> Result<Vec<(String, Vec<f64>)>, SchemaError> {
    let mut pool: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut dim = None;
    for graph in corpus {
        for node in &graph.nodes {
            if !matches!(node.kind, NodeKind::Predicate(_)) {
                continue;
            }
            let key = node.key();
            if pool.contains_key(&key) {
                continue;
            }
            let emb = node
                .embedding
                .as_ref()
                .ok_or_else(|| SchemaError::MissingEmbedding(key.clone()))?;
            let expected = *dim.get_or_insert(emb.len());
            if emb.len() != expected {
                return Err(SchemaError::DimensionMismatch {
                    expected,
                    got: emb.len(),
                });
            }
            pool.insert(key, emb.clone());
        }
    }
    if pool.is_empty() {
        return Err(SchemaError::EmptyCorpus);
    }
    Ok(pool.into_iter().collect())
}
