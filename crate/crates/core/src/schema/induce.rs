use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kmeans::sq_dist;
use super::{build_schema_graph, collect_predicates, select_k, ClusteringResult, SchemaError, SchemaLibrary, SchemaNode, LIBRARY_VERSION};
use crate::embed::EmbeddingProvider;
use crate::fol::FolGraph;
use crate::llm::Gateway;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InduceConfig {
    pub k_grid: Vec<usize>,
    pub seed: u64,
}

impl Default for InduceConfig {
    fn default() -> Self {
        Self {
            k_grid: vec![4, 8, 16, 32, 64],
            seed: 13,
        }
    }
}

/// First non-empty line of a summarization response, without list markers
/// or surrounding quotes.
pub fn clean_summary(response: &str) -> Option<String> {
    let line = response.lines().map(str::trim).find(|l| !l.is_empty())?;
    let line = line.trim_start_matches(['-', '*', '•']).trim();
    let line = line.trim_matches(['"', '\'', '`']).trim();
    (!line.is_empty()).then(|| line.to_string())
}

fn summarize(members: &[String], gateway: &Gateway) -> Option<String> {
    let chunk = gateway.config().p2_max_lines.max(1);
    let mut parts = Vec::new();
    for lines in members.chunks(chunk) {
        parts.push(clean_summary(&gateway.p2(lines).ok()?)?);
    }
    Some(parts.join("; "))
}

/// Summarizes every cluster with P2 and embeds the summaries.
///
/// Clusters are summarized concurrently; the gateway bounds in-flight
/// requests. Members beyond the P2 line cap go out in further calls whose
/// summaries are joined with `"; "`. A cluster whose summarization fails
/// takes the member nearest its centroid as summary and is flagged. If the
/// summaries cannot be embedded, centroids stand in for them.
pub fn abstract_clusters(
    result: &ClusteringResult,
    pool: &[(String, Vec<f64>)],
    gateway: &Gateway,
    embedder: &dyn EmbeddingProvider,
) -> Vec<SchemaNode> {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); result.k];
    for (i, &a) in result.assignments.iter().enumerate() {
        members[a].push(i);
    }
    let mut nodes: Vec<SchemaNode> = members
        .par_iter()
        .enumerate()
        .map(|(id, idx)| {
            let names: Vec<String> = idx.iter().map(|&i| pool[i].0.clone()).collect();
            let centroid = result.centroids[id].clone();
            let (summary, summary_fallback) = match summarize(&names, gateway) {
                Some(s) => (s, false),
                None => {
                    let nearest = idx
                        .iter()
                        .copied()
                        .min_by(|&a, &b| sq_dist(&pool[a].1, &centroid).total_cmp(&sq_dist(&pool[b].1, &centroid)))
                        .expect("clusters are non-empty");
                    (pool[nearest].0.clone(), true)
                }
            };
            SchemaNode {
                id,
                summary,
                centroid,
                summary_embedding: Vec::new(),
                member_count: names.len(),
                members: names,
                summary_fallback,
            }
        })
        .collect();

    let texts: Vec<String> = nodes.iter().map(|n| n.summary.clone()).collect();
    match embedder.embed_batch(&texts) {
        Ok(embs) if embs.iter().all(|e| e.len() == result.centroids[0].len()) => {
            for (n, e) in nodes.iter_mut().zip(embs) {
                n.summary_embedding = e;
            }
        }
        _ => {
            for n in &mut nodes {
                n.summary_embedding = n.centroid.clone();
            }
        }
    }
    nodes
}

/// Runs the whole induction over an embedded corpus: pool, choose K by
/// silhouette, cluster, summarize, and link.
///
/// Grid values outside `2..=pool size` are skipped.
pub fn induce(
    corpus: &[FolGraph],
    config: &InduceConfig,
    gateway: &Gateway,
    embedder: &dyn EmbeddingProvider,
    config_fingerprint: &str,
) -> Result<SchemaLibrary, SchemaError> {
    let pool = collect_predicates(corpus)?;
    let n = pool.len();
    let grid: Vec<usize> = config.k_grid.iter().copied().filter(|&k| (2..=n).contains(&k)).collect();
    if grid.is_empty() {
        return Err(SchemaError::InvalidK {
            k: config.k_grid.iter().copied().max().unwrap_or(0),
            n,
        });
    }
    let points: Vec<Vec<f64>> = pool.iter().map(|(_, e)| e.clone()).collect();
    let selection = select_k(&points, &grid, config.seed)?;
    let nodes = abstract_clusters(&selection.result, &pool, gateway, embedder);
    let graph = build_schema_graph(nodes, corpus)?;
    Ok(SchemaLibrary {
        version: LIBRARY_VERSION,
        d: points[0].len(),
        seed: config.seed,
        k: selection.k,
        k_scores: selection.scores,
        nodes: graph.nodes,
        edges: graph.edges,
        config_fingerprint: config_fingerprint.to_string(),
        llm_model: gateway.config().model.clone(),
        embedding_provider: embedder.name().to_string(),
    })
}
