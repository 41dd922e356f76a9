use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{KernelConfig, KernelError};
use crate::fol::{FolGraph, RelationType};

/// Weight each relation contributes when relation channels are collapsed
/// into one adjacency matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelationWeights {
    pub implies: f64,
    pub conjunction: f64,
    pub disjunction: f64,
    pub instance_of: f64,
}

impl Default for RelationWeights {
    fn default() -> Self {
        Self {
            implies: 1.0,
            conjunction: 0.5,
            disjunction: 0.5,
            instance_of: 1.0,
        }
    }
}

impl RelationWeights {
    pub fn get(&self, r: RelationType) -> f64 {
        match r {
            RelationType::Implies => self.implies,
            RelationType::Conjunction => self.conjunction,
            RelationType::Disjunction => self.disjunction,
            RelationType::InstanceOf => self.instance_of,
        }
    }
}

/// Symmetric weighted adjacency of a graph. Nodes u and v are joined with
/// the sum of the weights of the relations that link them in either direction.
pub fn collapse_adjacency(graph: &FolGraph, weights: &RelationWeights) -> Array2<f64> {
    let n = graph.nodes.len();
    let mut seen = std::collections::HashSet::new();
    let mut adj = Array2::zeros((n, n));
    for e in &graph.edges {
        if e.src == e.dst {
            continue;
        }
        let (lo, hi) = (e.src.min(e.dst), e.src.max(e.dst));
        if seen.insert((lo, hi, e.relation)) {
            let w = weights.get(e.relation);
            adj[[lo, hi]] += w;
            adj[[hi, lo]] += w;
        }
    }
    adj
}

/// The neighborhood of one node, padded to a fixed size.
///
/// `nodes[0]` is the center. Rows and columns of `adjacency` past
/// `nodes.len()` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedSubgraph {
    pub nodes: Vec<usize>,
    pub adjacency: Array2<f64>,
}

impl PaddedSubgraph {
    pub fn valid(&self) -> usize {
        self.nodes.len()
    }

    pub fn padded_size(&self) -> usize {
        self.adjacency.nrows()
    }

    /// Feature rows of the subgraph nodes, zero-padded.
    pub fn gather(&self, features: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.padded_size(), features.ncols()));
        for (r, &v) in self.nodes.iter().enumerate() {
            out.row_mut(r).assign(&features.row(v));
        }
        out
    }
}

/// BFS neighborhood of `v` out to `hop` hops over a collapsed adjacency.
/// Keeps the center, then nodes by hop and index, up to `n_sub` nodes.
pub fn khop_from_adjacency(adj: &Array2<f64>, v: usize, hop: usize, n_sub: usize) -> Result<PaddedSubgraph, KernelError> {
    let n = adj.nrows();
    if v >= n {
        return Err(KernelError::IndexOutOfRange { index: v, len: n });
    }
    let mut depth = vec![usize::MAX; n];
    depth[v] = 0;
    let mut order = vec![v];
    let mut frontier = vec![v];
    for h in 1..=hop {
        let mut next: Vec<usize> = Vec::new();
        for &u in &frontier {
            for w in 0..n {
                if depth[w] == usize::MAX && adj[[u, w]] != 0.0 {
                    depth[w] = h;
                    next.push(w);
                }
            }
        }
        next.sort_unstable();
        order.extend(&next);
        frontier = next;
    }
    order.truncate(n_sub);
    let mut padded = Array2::zeros((n_sub, n_sub));
    for (i, &a) in order.iter().enumerate() {
        for (j, &b) in order.iter().enumerate() {
            padded[[i, j]] = adj[[a, b]];
        }
    }
    Ok(PaddedSubgraph {
        nodes: order,
        adjacency: padded,
    })
}

pub fn khop_subgraph(
    graph: &FolGraph,
    v: usize,
    hop: usize,
    n_sub: usize,
    weights: &RelationWeights,
) -> Result<PaddedSubgraph, KernelError> {
    khop_from_adjacency(&collapse_adjacency(graph, weights), v, hop, n_sub)
}

/// An embedded graph ready for the model: node features plus every node's
/// padded neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedGraph {
    pub features: Array2<f64>,
    pub subgraphs: Vec<PaddedSubgraph>,
}

impl PreparedGraph {
    pub fn new(graph: &FolGraph, config: &KernelConfig) -> Result<Self, KernelError> {
        if graph.nodes.is_empty() {
            return Err(KernelError::EmptyGraph);
        }
        let d = graph.nodes[0]
            .embedding
            .as_ref()
            .ok_or(KernelError::NotEmbedded(0))?
            .len();
        let mut features = Array2::zeros((graph.nodes.len(), d));
        for (i, node) in graph.nodes.iter().enumerate() {
            let e = node.embedding.as_ref().ok_or(KernelError::NotEmbedded(i))?;
            if e.len() != d {
                return Err(KernelError::ShapeMismatch {
                    what: "node embedding",
                    expected: d,
                    got: e.len(),
                });
            }
            features.row_mut(i).assign(&ndarray::ArrayView1::from(e.as_slice()));
        }
        let adj = collapse_adjacency(graph, &config.relation_weights);
        let subgraphs = (0..graph.nodes.len())
            .map(|v| khop_from_adjacency(&adj, v, config.hop, config.n_sub))
            .collect::<Result<_, _>>()?;
        Ok(Self { features, subgraphs })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }
}
