use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::expr::{FolExpr, Predicate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationType {
    Implies,
    Conjunction,
    Disjunction,
    InstanceOf,
}

impl RelationType {
    pub const ALL: [RelationType; 4] = [
        RelationType::Implies,
        RelationType::Conjunction,
        RelationType::Disjunction,
        RelationType::InstanceOf,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    Predicate(Predicate),
    /// A schema node added by augmentation; `cluster` indexes the library.
    Schema { cluster: usize, summary: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FolNode {
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<usize>,
    /// Text to embed instead of the canonical predicate string.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed_text: Option<String>,
}

impl FolNode {
    pub fn predicate(p: Predicate) -> Self {
        Self {
            kind: NodeKind::Predicate(p),
            embedding: None,
            cluster: None,
            embed_text: None,
        }
    }

    /// Key used for deduplication and as the default text to embed.
    pub fn key(&self) -> String {
        match &self.kind {
            NodeKind::Predicate(p) => p.canonical(),
            NodeKind::Schema { cluster, .. } => format!("schema#{cluster}"),
        }
    }

    pub fn text_for_embedding(&self) -> String {
        if let Some(t) = &self.embed_text {
            return t.clone();
        }
        match &self.kind {
            NodeKind::Predicate(p) => p.canonical(),
            NodeKind::Schema { summary, .. } => summary.clone(),
        }
    }

    pub fn is_schema(&self) -> bool {
        matches!(self.kind, NodeKind::Schema { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FolEdge {
    pub src: usize,
    pub dst: usize,
    pub relation: RelationType,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("expression list contains no predicates")]
    EmptyGraph,
    #[error("node index {index} out of range for graph with {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },
}

/// Instance-level reasoning graph: predicate nodes joined by logical relations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FolGraph {
    pub nodes: Vec<FolNode>,
    pub edges: Vec<FolEdge>,
}

impl FolGraph {
    /// Single-node graph used when a rationale yields no parseable predicate:
    /// `Text(<target>)`, embedded from the raw sentence.
    pub fn fallback(target: &str, sentence: &str) -> Self {
        let mut node = FolNode::predicate(Predicate::new("Text", vec![target.to_string()]));
        node.embed_text = Some(sentence.to_string());
        Self {
            nodes: vec![node],
            edges: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn has_edge(&self, src: usize, dst: usize, relation: RelationType) -> bool {
        self.edges
            .iter()
            .any(|e| e.src == src && e.dst == dst && e.relation == relation)
    }

    /// Adds an edge unless it is a self-loop or already present. Returns
    /// whether the edge was inserted.
    pub fn add_edge(&mut self, src: usize, dst: usize, relation: RelationType) -> Result<bool, GraphError> {
        let len = self.nodes.len();
        for index in [src, dst] {
            if index >= len {
                return Err(GraphError::IndexOutOfRange { index, len });
            }
        }
        if src == dst || self.has_edge(src, dst, relation) {
            return Ok(false);
        }
        self.edges.push(FolEdge { src, dst, relation });
        Ok(true)
    }

    pub fn predicate_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| !n.is_schema())
            .map(|(i, _)| i)
    }

    pub fn is_embedded(&self) -> bool {
        self.nodes.iter().all(|n| n.embedding.is_some())
    }

    /// Relabels nodes: new index of old node `i` is `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.nodes.len());
        let mut nodes = vec![None; self.nodes.len()];
        for (old, &new) in perm.iter().enumerate() {
            nodes[new] = Some(self.nodes[old].clone());
        }
        Self {
            nodes: nodes.into_iter().map(|n| n.expect("perm is a permutation")).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| FolEdge {
                    src: perm[e.src],
                    dst: perm[e.dst],
                    relation: e.relation,
                })
                .collect(),
        }
    }
}

struct Builder {
    graph: FolGraph,
    index: HashMap<String, usize>,
    seen: HashSet<FolEdge>,
}

impl Builder {
    fn node(&mut self, p: &Predicate) -> usize {
        let key = p.canonical();
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        let i = self.graph.nodes.len();
        self.graph.nodes.push(FolNode::predicate(p.clone()));
        self.index.insert(key, i);
        i
    }

    fn edge(&mut self, src: usize, dst: usize, relation: RelationType) {
        let e = FolEdge { src, dst, relation };
        if src != dst && self.seen.insert(e) {
            self.graph.edges.push(e);
        }
    }

    fn leaf_ids(&mut self, e: &FolExpr) -> Vec<usize> {
        e.leaves().into_iter().map(|p| self.node(p)).collect()
    }

    fn pairwise(&mut self, children: &[FolExpr], relation: RelationType) {
        let groups: Vec<Vec<usize>> = children.iter().map(|c| self.leaf_ids(c)).collect();
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                for &a in &groups[i] {
                    for &b in &groups[j] {
                        self.edge(a, b, relation);
                        self.edge(b, a, relation);
                    }
                }
            }
        }
    }

    fn visit(&mut self, e: &FolExpr) {
        match e {
            FolExpr::Atom(p) => {
                self.node(p);
            }
            FolExpr::Not(inner) => self.visit(inner),
            FolExpr::And(cs) => {
                self.pairwise(cs, RelationType::Conjunction);
                cs.iter().for_each(|c| self.visit(c));
            }
            FolExpr::Or(cs) => {
                self.pairwise(cs, RelationType::Disjunction);
                cs.iter().for_each(|c| self.visit(c));
            }
            FolExpr::Implies(a, b) => {
                let from = self.leaf_ids(a);
                let to = self.leaf_ids(b);
                for &s in &from {
                    for &d in &to {
                        self.edge(s, d, RelationType::Implies);
                    }
                }
                self.visit(a);
                self.visit(b);
            }
        }
    }
}

/// Folds expressions into one graph: one node per distinct canonical
/// predicate, `Implies` edges from every antecedent leaf to every consequent
/// leaf, and symmetric `Conjunction`/`Disjunction` edges between leaves of
/// distinct operands. Embeddings are left unset.
pub fn build_fol_graph(exprs: &[FolExpr]) -> Result<FolGraph, GraphError> {
    let mut b = Builder {
        graph: FolGraph::default(),
        index: HashMap::new(),
        seen: HashSet::new(),
    };
    for e in exprs {
        b.visit(e);
    }
    if b.graph.nodes.is_empty() {
        return Err(GraphError::EmptyGraph);
    }
    Ok(b.graph)
}
