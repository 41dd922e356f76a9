use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::rw::{rw_kernel, rw_kernel_backward, topg_select, KernelFilter, WMatrix};
use super::{KernelConfig, KernelError, PreparedGraph};
use crate::schema::SchemaFilter;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub filters: Vec<KernelFilter>,
    pub w: WMatrix,
}

/// `Φ → ReLU(W1 Φ + b1) → W2 · + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Every learnable tensor. Gradients use the same type.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    pub layers: Vec<LayerParams>,
    pub head: HeadParams,
    /// Bumped by every optimizer step; forward traces remember it.
    #[serde(skip)]
    pub generation: u64,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.head == other.head
    }
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

impl ModelParams {
    /// Layer-0 filters from schema filters. Deeper layers reuse each
    /// filter's adjacency with fresh `N(0, 0.1)` features of width `g`.
    pub fn from_schema(config: &KernelConfig, d: usize, filters: &[SchemaFilter], seed: u64) -> Result<Self, KernelError> {
        let mut layer0 = Vec::with_capacity(filters.len());
        for f in filters {
            if f.len() > config.n_filt {
                return Err(KernelError::ShapeMismatch {
                    what: "schema filter size within n_filt",
                    expected: config.n_filt,
                    got: f.len(),
                });
            }
            if f.features.ncols() != d {
                return Err(KernelError::ShapeMismatch {
                    what: "schema filter feature dimension",
                    expected: d,
                    got: f.features.ncols(),
                });
            }
            layer0.push(KernelFilter {
                adjacency: f.adjacency.clone(),
                features: f.features.clone(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(config, d, layer0, &mut rng)
    }

    /// Filters with no schema behind them: `n_filt` nodes, a random symmetric
    /// adjacency (each pair linked with probability 1/2, weight uniform in
    /// [0, 1)) and `N(0, 1/√d)` features.
    pub fn random(config: &KernelConfig, d: usize, seed: u64) -> Result<Self, KernelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = config.n_filt;
        let layer0 = (0..config.n_filters)
            .map(|_| {
                let mut adjacency = Array2::zeros((m, m));
                for i in 0..m {
                    for j in i + 1..m {
                        if rng.gen_bool(0.5) {
                            let w: f64 = rng.gen();
                            adjacency[[i, j]] = w;
                            adjacency[[j, i]] = w;
                        }
                    }
                }
                let features = normal_matrix(&mut rng, m, d, 1.0 / (d as f64).sqrt());
                KernelFilter { adjacency, features }
            })
            .collect();
        Self::build(config, d, layer0, &mut rng)
    }

    fn build(config: &KernelConfig, d: usize, layer0: Vec<KernelFilter>, rng: &mut ChaCha8Rng) -> Result<Self, KernelError> {
        config.validate()?;
        if config.g > layer0.len() {
            return Err(KernelError::InvalidG {
                g: config.g,
                filters: layer0.len(),
            });
        }
        let w = WMatrix::identity(config.product_dim(), config.diagonal_w);
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let filters = if l == 0 {
                layer0.clone()
            } else {
                layer0
                    .iter()
                    .map(|f| KernelFilter {
                        adjacency: f.adjacency.clone(),
                        features: normal_matrix(rng, f.len(), config.g, 0.1),
                    })
                    .collect()
            };
            layers.push(LayerParams { filters, w: w.clone() });
        }
        let phi = config.readout_dim(d);
        let head = HeadParams {
            w1: normal_matrix(rng, config.hidden, phi, (2.0 / phi as f64).sqrt()),
            b1: Array1::zeros(config.hidden),
            w2: normal_matrix(rng, config.classes, config.hidden, (1.0 / config.hidden as f64).sqrt()),
            b2: Array1::zeros(config.classes),
        };
        Ok(Self {
            layers,
            head,
            generation: 0,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    filters: l.filters.iter().map(KernelFilter::zeros_like).collect(),
                    w: l.w.zeros_like(),
                })
                .collect(),
            head: HeadParams {
                w1: Array2::zeros(self.head.w1.raw_dim()),
                b1: Array1::zeros(self.head.b1.len()),
                w2: Array2::zeros(self.head.w2.raw_dim()),
                b2: Array1::zeros(self.head.b2.len()),
            },
            generation: self.generation,
        }
    }

    /// Every tensor as a flat slice, with a stable name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            for (i, f) in layer.filters.iter().enumerate() {
                out.push((format!("layer{l}.filter{i}.adjacency"), f.adjacency.as_slice().expect("standard layout")));
                out.push((format!("layer{l}.filter{i}.features"), f.features.as_slice().expect("standard layout")));
            }
            out.push((format!("layer{l}.w"), layer.w.as_slice()));
        }
        let h = &self.head;
        out.push(("head.w1".into(), h.w1.as_slice().expect("standard layout")));
        out.push(("head.b1".into(), h.b1.as_slice().expect("standard layout")));
        out.push(("head.w2".into(), h.w2.as_slice().expect("standard layout")));
        out.push(("head.b2".into(), h.b2.as_slice().expect("standard layout")));
        out
    }

    /// Mutable counterpart of [`Self::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            for f in &mut layer.filters {
                out.push(f.adjacency.as_slice_mut().expect("standard layout"));
                out.push(f.features.as_slice_mut().expect("standard layout"));
            }
            out.push(layer.w.as_slice_mut());
        }
        let h = &mut self.head;
        out.push(h.w1.as_slice_mut().expect("standard layout"));
        out.push(h.b1.as_slice_mut().expect("standard layout"));
        out.push(h.w2.as_slice_mut().expect("standard layout"));
        out.push(h.b2.as_slice_mut().expect("standard layout"));
        out
    }

    /// `self += scale · other`; shapes must match.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        let src = other.tensors();
        for (dst, (_, src)) in self.tensors_mut().into_iter().zip(src) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    pub fn feature_dim(&self) -> usize {
        self.layers[0].filters[0].features.ncols()
    }
}

/// Output of one kernel layer over all nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutput {
    /// `|V| × g`: column j holds the kernel value of the j-th selected filter.
    pub features: Array2<f64>,
    /// Kernel value against every filter, per node.
    pub scores: Vec<Vec<f64>>,
    /// Selected filter indices per node, ascending.
    pub selected: Vec<Vec<usize>>,
}

pub fn layer_forward(
    prepared: &PreparedGraph,
    x: &Array2<f64>,
    layer: &LayerParams,
    config: &KernelConfig,
) -> Result<LayerOutput, KernelError> {
    let n = prepared.subgraphs.len();
    if x.nrows() != n {
        return Err(KernelError::ShapeMismatch {
            what: "feature rows",
            expected: n,
            got: x.nrows(),
        });
    }
    let mut features = Array2::zeros((n, config.g));
    let mut scores = Vec::with_capacity(n);
    let mut selected = Vec::with_capacity(n);
    for (v, sub) in prepared.subgraphs.iter().enumerate() {
        let x_sub = sub.gather(x);
        let row = layer
            .filters
            .iter()
            .map(|f| rw_kernel(sub.adjacency.view(), x_sub.view(), f, &layer.w, config.p))
            .collect::<Result<Vec<f64>, _>>()?;
        let pick = topg_select(&row, config.g)?;
        for (q, &j) in pick.iter().enumerate() {
            features[[v, q]] = row[j];
        }
        scores.push(row);
        selected.push(pick);
    }
    Ok(LayerOutput {
        features,
        scores,
        selected,
    })
}

/// `Φ = [Σ_v x0_v, Σ_v y1_v, …, Σ_v yL_v]`.
pub fn readout(x0: &Array2<f64>, layer_outputs: &[&Array2<f64>]) -> Array1<f64> {
    let mut parts = vec![x0.sum_axis(Axis(0))];
    parts.extend(layer_outputs.iter().map(|y| y.sum_axis(Axis(0))));
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(0), &views).expect("1-D parts")
}

pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let e = logits.mapv(|x| (x - max).exp());
    let z = e.sum();
    e / z
}

fn log_sum_exp(logits: &Array1<f64>) -> f64 {
    let max = logits.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    max + logits.mapv(|x| (x - max).exp()).sum().ln()
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub generation: u64,
    /// Input features of each layer; `inputs[0]` are the node embeddings.
    pub inputs: Vec<Array2<f64>>,
    pub outputs: Vec<LayerOutput>,
    pub phi: Array1<f64>,
    pub hidden_pre: Array1<f64>,
    pub hidden: Array1<f64>,
    pub logits: Array1<f64>,
    pub probs: Array1<f64>,
}

impl ForwardTrace {
    /// Selected filter indices per layer and node.
    pub fn selected_filters(&self) -> Vec<Vec<Vec<usize>>> {
        self.outputs.iter().map(|o| o.selected.clone()).collect()
    }

    pub fn predicted(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Cross-entropy of the gold class.
    pub fn loss(&self, gold: usize) -> f64 {
        log_sum_exp(&self.logits) - self.logits[gold]
    }
}

pub fn forward(prepared: &PreparedGraph, config: &KernelConfig, params: &ModelParams) -> Result<ForwardTrace, KernelError> {
    let d = prepared.features.ncols();
    if params.layers.len() != config.layers {
        return Err(KernelError::ShapeMismatch {
            what: "layer count",
            expected: config.layers,
            got: params.layers.len(),
        });
    }
    if params.head.w1.ncols() != config.readout_dim(d) {
        return Err(KernelError::ShapeMismatch {
            what: "readout dimension",
            expected: params.head.w1.ncols(),
            got: config.readout_dim(d),
        });
    }
    let mut inputs = vec![prepared.features.clone()];
    let mut outputs: Vec<LayerOutput> = Vec::with_capacity(config.layers);
    for layer in &params.layers {
        let out = layer_forward(prepared, inputs.last().expect("non-empty"), layer, config)?;
        inputs.push(out.features.clone());
        outputs.push(out);
    }
    inputs.pop();
    let ys: Vec<&Array2<f64>> = outputs.iter().map(|o| &o.features).collect();
    let phi = readout(&prepared.features, &ys);
    let h = &params.head;
    let hidden_pre = h.w1.dot(&phi) + &h.b1;
    let hidden = hidden_pre.mapv(|x| x.max(0.0));
    let logits = h.w2.dot(&hidden) + &h.b2;
    let probs = softmax(&logits);
    Ok(ForwardTrace {
        generation: params.generation,
        inputs,
        outputs,
        phi,
        hidden_pre,
        hidden,
        logits,
        probs,
    })
}

/// Exact gradients of the cross-entropy loss for `gold`; returns the loss
/// and the gradient. Top-g selections from the trace are held fixed.
pub fn backward(
    prepared: &PreparedGraph,
    config: &KernelConfig,
    params: &ModelParams,
    trace: &ForwardTrace,
    gold: usize,
) -> Result<(f64, ModelParams), KernelError> {
    if trace.generation != params.generation {
        return Err(KernelError::StaleCache {
            trace: trace.generation,
            params: params.generation,
        });
    }
    if gold >= config.classes {
        return Err(KernelError::BadLabel {
            label: gold,
            classes: config.classes,
        });
    }
    let mut grad = params.zeros_like();
    let h = &params.head;

    let mut dlogits = trace.probs.clone();
    dlogits[gold] -= 1.0;
    grad.head.b2.assign(&dlogits);
    grad.head.w2 = outer(&dlogits, &trace.hidden);
    let dhidden = h.w2.t().dot(&dlogits);
    let dpre = Array1::from_shape_fn(dhidden.len(), |i| if trace.hidden_pre[i] > 0.0 { dhidden[i] } else { 0.0 });
    grad.head.b1.assign(&dpre);
    grad.head.w1 = outer(&dpre, &trace.phi);
    let dphi = h.w1.t().dot(&dpre);

    let d = prepared.features.ncols();
    let n = prepared.len();
    let mut carry: Option<Array2<f64>> = None;
    for l in (0..config.layers).rev() {
        let seg = dphi.slice(s![d + l * config.g..d + (l + 1) * config.g]);
        let mut dy = Array2::from_shape_fn((n, config.g), |(_, q)| seg[q]);
        if let Some(c) = carry.take() {
            dy += &c;
        }
        carry = layer_backward(
            prepared,
            &trace.inputs[l],
            &trace.outputs[l],
            &params.layers[l],
            &dy,
            config,
            &mut grad.layers[l],
            l > 0,
        )?;
    }
    Ok((trace.loss(gold), grad))
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

#[allow(clippy::too_many_arguments)]
fn layer_backward(
    prepared: &PreparedGraph,
    x: &Array2<f64>,
    out: &LayerOutput,
    layer: &LayerParams,
    dy: &Array2<f64>,
    config: &KernelConfig,
    grad: &mut LayerParams,
    need_dx: bool,
) -> Result<Option<Array2<f64>>, KernelError> {
    let mut dx = need_dx.then(|| Array2::zeros(x.raw_dim()));
    for (v, sub) in prepared.subgraphs.iter().enumerate() {
        let x_sub = sub.gather(x);
        for (q, &j) in out.selected[v].iter().enumerate() {
            let gk = dy[[v, q]];
            if gk == 0.0 {
                continue;
            }
            let dxs = rw_kernel_backward(
                sub.adjacency.view(),
                x_sub.view(),
                &layer.filters[j],
                &layer.w,
                config.p,
                gk,
                &mut grad.filters[j],
                &mut grad.w,
            )?;
            if let Some(dx) = dx.as_mut() {
                for (r, &node) in sub.nodes.iter().enumerate() {
                    let mut row = dx.row_mut(node);
                    row += &dxs.row(r);
                }
            }
        }
    }
    Ok(dx)
}
