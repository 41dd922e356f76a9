use std::collections::HashMap;

use super::KernelError;
use crate::fol::{FolGraph, FolNode, NodeKind, RelationType};
use crate::schema::SchemaLibrary;

/// Links every predicate node to the schema node of its nearest cluster.
///
/// Schema nodes carry the summary embedding and are shared by all predicates
/// in the same cluster. Existing nodes and edges are left as they are, so
/// augmenting an augmented graph changes nothing.
pub fn augment_graph(graph: &FolGraph, library: &SchemaLibrary) -> Result<FolGraph, KernelError> {
    let mut out = graph.clone();
    let mut schema_at: HashMap<usize, usize> = HashMap::new();
    for (i, node) in out.nodes.iter().enumerate() {
        if let NodeKind::Schema { cluster, .. } = node.kind {
            schema_at.entry(cluster).or_insert(i);
        }
    }
    let predicates: Vec<usize> = out.predicate_indices().collect();
    for i in predicates {
        let emb = out.nodes[i].embedding.as_ref().ok_or(KernelError::NotEmbedded(i))?;
        let cluster = library.assign(emb)?;
        let s = match schema_at.get(&cluster) {
            Some(&s) => s,
            None => {
                let schema = &library.nodes[cluster];
                out.nodes.push(FolNode {
                    kind: NodeKind::Schema {
                        cluster,
                        summary: schema.summary.clone(),
                    },
                    embedding: Some(schema.feature().to_vec()),
                    cluster: Some(cluster),
                    embed_text: None,
                });
                let s = out.nodes.len() - 1;
                schema_at.insert(cluster, s);
                s
            }
        };
        out.add_edge(i, s, RelationType::InstanceOf)
            .map_err(|_| KernelError::IndexOutOfRange {
                index: s,
                len: out.nodes.len(),
            })?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fol::Predicate;
    use crate::schema::{SchemaNode, LIBRARY_VERSION};

    fn library() -> SchemaLibrary {
        let node = |id: usize, x: f64| SchemaNode {
            id,
            summary: format!("concept {id}"),
            centroid: vec![x, 0.0],
            summary_embedding: vec![x, 1.0],
            members: vec![format!("M{id}(a)")],
            member_count: 1,
            summary_fallback: false,
        };
        SchemaLibrary {
            version: LIBRARY_VERSION,
            d: 2,
            seed: 0,
            k: 2,
            k_scores: vec![],
            nodes: vec![node(0, 0.0), node(1, 10.0)],
            edges: vec![],
            config_fingerprint: String::new(),
            llm_model: String::new(),
            embedding_provider: String::new(),
        }
    }

    fn graph(xs: &[f64]) -> FolGraph {
        FolGraph {
            nodes: xs
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let mut n = FolNode::predicate(Predicate::new(format!("P{i}"), vec!["a".into()]));
                    n.embedding = Some(vec![x, 0.0]);
                    n
                })
                .collect(),
            edges: vec![],
        }
    }

    #[test]
    fn shared_cluster_adds_one_node() {
        let g = augment_graph(&graph(&[0.1, 0.2]), &library()).unwrap();
        assert_eq!(g.nodes.len(), 3);
        assert_eq!(g.edges.len(), 2);
        assert_eq!(g.nodes[2].embedding, Some(vec![0.0, 1.0]));
        assert!(g.edges.iter().all(|e| e.dst == 2 && e.relation == RelationType::InstanceOf));
    }

    #[test]
    fn distinct_clusters_add_two_nodes() {
        let g = augment_graph(&graph(&[0.1, 9.0]), &library()).unwrap();
        assert_eq!(g.nodes.len(), 4);
        assert_eq!(g.edges.len(), 2);
    }

    #[test]
    fn augmenting_twice_is_a_no_op() {
        let once = augment_graph(&graph(&[0.1, 9.0, 8.0]), &library()).unwrap();
        assert_eq!(augment_graph(&once, &library()).unwrap(), once);
    }

    #[test]
    fn dimension_mismatch() {
        let mut g = graph(&[0.1]);
        g.nodes[0].embedding = Some(vec![1.0]);
        assert!(matches!(augment_graph(&g, &library()), Err(KernelError::Schema(_))));
    }
}
