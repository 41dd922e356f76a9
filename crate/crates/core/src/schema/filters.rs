use std::collections::VecDeque;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{SchemaError, SchemaGraph};

/// A local subgraph of the schema graph, used to initialize one kernel filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaFilter {
    pub center: usize,
    /// Schema node ids; the center comes first.
    pub node_ids: Vec<usize>,
    /// One row per filter node.
    pub features: Array2<f64>,
    pub adjacency: Array2<f64>,
}

impl SchemaFilter {
    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }
}

fn hops_from(adj: &Array2<f64>, center: usize, max_hop: usize) -> Vec<Option<usize>> {
    let n = adj.nrows();
    let mut hop = vec![None; n];
    hop[center] = Some(0);
    let mut queue = VecDeque::from([center]);
    while let Some(u) = queue.pop_front() {
        let h = hop[u].expect("queued nodes have a hop");
        if h == max_hop {
            continue;
        }
        for v in 0..n {
            if hop[v].is_none() && adj[[u, v]] > 0.0 {
                hop[v] = Some(h + 1);
                queue.push_back(v);
            }
        }
    }
    hop
}

/// Cuts `n_filters` filters out of the schema graph.
///
/// Centers are the nodes with the most members (ties by smaller id). Each
/// filter holds the center plus its `hop`-hop neighborhood, ordered by edge
/// weight to the center (descending), then hop, then id, and truncated to
/// `size_cap` nodes. Features are summary embeddings; adjacency is the
/// relation-collapsed schema adjacency restricted to the filter nodes.
pub fn extract_filters(
    graph: &SchemaGraph,
    n_filters: usize,
    hop: usize,
    size_cap: usize,
) -> Result<Vec<SchemaFilter>, SchemaError> {
    let n = graph.nodes.len();
    if n_filters == 0 || n_filters > n {
        return Err(SchemaError::InvalidFilterCount {
            requested: n_filters,
            available: n,
        });
    }
    let dim = graph.nodes[0].feature().len();
    if let Some(bad) = graph.nodes.iter().find(|node| node.feature().len() != dim) {
        return Err(SchemaError::DimensionMismatch {
            expected: dim,
            got: bad.feature().len(),
        });
    }
    let adj = graph.collapsed_adjacency();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        graph.nodes[b]
            .member_count
            .cmp(&graph.nodes[a].member_count)
            .then(a.cmp(&b))
    });

    let cap = size_cap.max(1);
    let filters = order[..n_filters]
        .iter()
        .map(|&center| {
            let hops = hops_from(&adj, center, hop);
            let mut nbrs: Vec<usize> = (0..n).filter(|&v| v != center && hops[v].is_some()).collect();
            nbrs.sort_by(|&a, &b| {
                adj[[center, b]]
                    .total_cmp(&adj[[center, a]])
                    .then(hops[a].cmp(&hops[b]))
                    .then(a.cmp(&b))
            });
            let mut ids = vec![center];
            ids.extend(nbrs.into_iter().take(cap - 1));
            let m = ids.len();
            let features = Array2::from_shape_fn((m, dim), |(r, c)| graph.nodes[ids[r]].feature()[c]);
            let adjacency = Array2::from_shape_fn((m, m), |(r, c)| adj[[ids[r], ids[c]]]);
            SchemaFilter {
                center: graph.nodes[center].id,
                node_ids: ids.iter().map(|&i| graph.nodes[i].id).collect(),
                features,
                adjacency,
            }
        })
        .collect();
    Ok(filters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fol::RelationType;
    use crate::schema::{SchemaEdge, SchemaNode};

    fn node(id: usize, count: usize) -> SchemaNode {
        SchemaNode {
            id,
            summary: format!("s{id}"),
            centroid: vec![id as f64, 1.0],
            summary_embedding: vec![id as f64, 2.0],
            members: (0..count).map(|m| format!("M{id}_{m}(x)")).collect(),
            member_count: count,
            summary_fallback: false,
        }
    }

    fn edge(src: usize, dst: usize, weight: f64) -> SchemaEdge {
        SchemaEdge {
            src,
            dst,
            relation: RelationType::Implies,
            weight,
        }
    }

    #[test]
    fn centers_by_member_count_then_id() {
        let g = SchemaGraph {
            nodes: [5, 9, 9, 1].iter().enumerate().map(|(i, &c)| node(i, c)).collect(),
            edges: vec![],
        };
        let f = extract_filters(&g, 2, 1, 6).unwrap();
        assert_eq!(f.iter().map(|f| f.center).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn isolated_center() {
        let g = SchemaGraph {
            nodes: vec![node(0, 3), node(1, 1)],
            edges: vec![],
        };
        let f = &extract_filters(&g, 1, 1, 6).unwrap()[0];
        assert_eq!(f.node_ids, vec![0]);
        assert_eq!(f.adjacency, Array2::<f64>::zeros((1, 1)));
        assert_eq!(f.features.row(0).to_vec(), vec![0.0, 2.0]);
    }

    #[test]
    fn star_truncates_to_heaviest_neighbors() {
        let mut nodes = vec![node(0, 20)];
        let mut edges = vec![];
        for leaf in 1..=10 {
            nodes.push(node(leaf, 1));
            edges.push(edge(0, leaf, leaf as f64 / 10.0));
        }
        let g = SchemaGraph { nodes, edges };
        let f = &extract_filters(&g, 1, 1, 6).unwrap()[0];
        assert_eq!(f.node_ids, vec![0, 10, 9, 8, 7, 6]);
        assert_eq!(f.adjacency[[0, 1]], 1.0);
        assert_eq!(f.adjacency[[1, 0]], 1.0);
        assert_eq!(f.adjacency[[1, 2]], 0.0);
    }

    #[test]
    fn second_hop_nodes_come_after_direct_neighbors() {
        let g = SchemaGraph {
            nodes: vec![node(0, 5), node(1, 1), node(2, 1), node(3, 1)],
            edges: vec![edge(0, 2, 0.5), edge(2, 3, 1.0), edge(1, 0, 0.5)],
        };
        assert_eq!(extract_filters(&g, 1, 1, 6).unwrap()[0].node_ids, vec![0, 1, 2]);
        assert_eq!(extract_filters(&g, 1, 2, 6).unwrap()[0].node_ids, vec![0, 1, 2, 3]);
    }

    #[test]
    fn invalid_filter_count() {
        let g = SchemaGraph {
            nodes: vec![node(0, 1)],
            edges: vec![],
        };
        assert_eq!(
            extract_filters(&g, 2, 1, 6),
            Err(SchemaError::InvalidFilterCount {
                requested: 2,
                available: 1
            })
        );
    }
}
