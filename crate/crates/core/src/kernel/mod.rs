//! The graph-kernel model: each node's neighborhood is compared to a bank of
//! learnable filter graphs with a p-step random-walk kernel, the best `g`
//! scores become the node's next features, and summed features from every
//! layer feed a small classifier head. Gradients are derived by hand.

mod augment;
mod checkpoint;
mod model;
mod rw;
mod subgraph;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::SchemaError;

pub use augment::augment_graph;
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use model::{
    backward, forward, layer_forward, readout, softmax, ForwardTrace, HeadParams, LayerOutput, LayerParams, ModelParams,
};
pub use rw::{rw_kernel, rw_kernel_backward, topg_select, unvec_cm, vec_cm, KernelFilter, WMatrix};
pub use subgraph::{collapse_adjacency, khop_from_adjacency, khop_subgraph, PaddedSubgraph, PreparedGraph, RelationWeights};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("{what}: expected {expected}, got {got}")]
    ShapeMismatch { what: &'static str, expected: usize, got: usize },
    #[error("g = {g} is invalid for {filters} filters")]
    InvalidG { g: usize, filters: usize },
    #[error("node index {index} out of range for graph with {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("node {0} has no embedding")]
    NotEmbedded(usize),
    #[error("forward trace is stale: made at generation {trace}, parameters are at {params}")]
    StaleCache { trace: u64, params: u64 },
    #[error("gold label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint was trained with schema library {expected}, but library {got} was supplied")]
    FingerprintMismatch { expected: String, got: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("checkpoint format error at {path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// Model hyperparameters. Fixed once a model is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    /// Padded subgraph size.
    pub n_sub: usize,
    /// Padded filter size; also the node cap when cutting schema filters.
    pub n_filt: usize,
    /// Walk length.
    pub p: usize,
    /// Filters kept per node.
    pub g: usize,
    /// Subgraph and schema-filter radius.
    pub hop: usize,
    pub n_filters: usize,
    pub layers: usize,
    pub hidden: usize,
    pub classes: usize,
    pub diagonal_w: bool,
    pub relation_weights: RelationWeights,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            n_sub: 8,
            n_filt: 6,
            p: 2,
            g: 4,
            hop: 1,
            n_filters: 16,
            layers: 2,
            hidden: 64,
            classes: 3,
            diagonal_w: false,
            relation_weights: RelationWeights::default(),
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<(), KernelError> {
        let positive = [
            ("n_sub", self.n_sub),
            ("n_filt", self.n_filt),
            ("p", self.p),
            ("g", self.g),
            ("n_filters", self.n_filters),
            ("layers", self.layers),
            ("hidden", self.hidden),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(KernelError::InvalidConfig(format!("{name} must be at least 1")));
        }
        if self.classes < 2 {
            return Err(KernelError::InvalidConfig("classes must be at least 2".into()));
        }
        if self.g > self.n_filters {
            return Err(KernelError::InvalidG {
                g: self.g,
                filters: self.n_filters,
            });
        }
        Ok(())
    }

    /// Side of W: the padded product-graph size.
    pub fn product_dim(&self) -> usize {
        self.n_sub * self.n_filt
    }

    /// Readout length for input feature dimension `d`.
    pub fn readout_dim(&self, d: usize) -> usize {
        d + self.layers * self.g
    }
}
