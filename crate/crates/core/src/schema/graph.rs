use std::collections::{BTreeMap, HashMap};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::SchemaError;
use crate::fol::{FolGraph, NodeKind, RelationType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaNode {
    /// Cluster index.
    pub id: usize,
    pub summary: String,
    pub centroid: Vec<f64>,
    pub summary_embedding: Vec<f64>,
    /// Canonical predicate strings, sorted.
    pub members: Vec<String>,
    pub member_count: usize,
    /// True when the summary is the member nearest the centroid because the
    /// summarization call failed.
    #[serde(default)]
    pub summary_fallback: bool,
}

impl SchemaNode {
    /// Feature vector for filters: the summary embedding, or the centroid
    /// when no summary embedding is available.
    pub fn feature(&self) -> &[f64] {
        if self.summary_embedding.is_empty() {
            &self.centroid
        } else {
            &self.summary_embedding
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemaEdge {
    pub src: usize,
    pub dst: usize,
    pub relation: RelationType,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SchemaGraph {
    pub nodes: Vec<SchemaNode>,
    pub edges: Vec<SchemaEdge>,
}

impl SchemaGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Symmetric relation-collapsed adjacency: entry (a, b) is the sum over
    /// relations of the larger of the two directed weights between a and b.
    pub fn collapsed_adjacency(&self) -> Array2<f64> {
        let n = self.nodes.len();
        let mut per_rel: HashMap<(usize, usize, RelationType), f64> = HashMap::new();
        for e in &self.edges {
            let (lo, hi) = (e.src.min(e.dst), e.src.max(e.dst));
            let w = per_rel.entry((lo, hi, e.relation)).or_insert(0.0);
            *w = w.max(e.weight);
        }
        let mut adj = Array2::zeros((n, n));
        for ((a, b, _), w) in per_rel {
            adj[[a, b]] += w;
            adj[[b, a]] += w;
        }
        adj
    }
}

/// Lifts instance-level edges to schema level.
///
/// Every edge between predicates in different clusters counts once toward
/// `(cluster(src), cluster(dst), relation)`. Weights are counts divided by
/// the largest count. `InstanceOf` edges and schema nodes in the corpus are
/// ignored.
pub fn build_schema_graph(nodes: Vec<SchemaNode>, corpus: &[FolGraph]) -> Result<SchemaGraph, SchemaError> {
    let mut cluster_of: HashMap<&str, usize> = HashMap::new();
    for node in &nodes {
        for m in &node.members {
            cluster_of.insert(m.as_str(), node.id);
        }
    }
    let mut counts: BTreeMap<(usize, usize, RelationType), usize> = BTreeMap::new();
    for graph in corpus {
        let mut clusters = Vec::with_capacity(graph.nodes.len());
        for node in &graph.nodes {
            clusters.push(match node.kind {
                NodeKind::Predicate(_) => {
                    let key = node.key();
                    Some(
                        *cluster_of
                            .get(key.as_str())
                            .ok_or(SchemaError::UnassignedPredicate(key))?,
                    )
                }
                NodeKind::Schema { .. } => None,
            });
        }
        for e in &graph.edges {
            if e.relation == RelationType::InstanceOf {
                continue;
            }
            if let (Some(i), Some(j)) = (clusters[e.src], clusters[e.dst]) {
                if i != j {
                    *counts.entry((i, j, e.relation)).or_insert(0) += 1;
                }
            }
        }
    }
    let max = counts.values().copied().max().unwrap_or(1) as f64;
    let edges = counts
        .into_iter()
        .map(|((src, dst, relation), c)| SchemaEdge {
            src,
            dst,
            relation,
            weight: c as f64 / max,
        })
        .collect();
    Ok(SchemaGraph { nodes, edges })
}
