//! Oracles shared by the integration tests. They are written from the
//! textbook definitions and do not call the code under test except to
//! evaluate the loss.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schemakernel::fol::{FolEdge, FolGraph, FolNode, Predicate, RelationType};
use schemakernel::kernel::{forward, vec_cm, KernelConfig, KernelFilter, ModelParams, PreparedGraph};

pub fn kron(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    Array2::from_shape_fn((ar * br, ac * bc), |(i, j)| a[[i / br, j / bc]] * b[[i % br, j % bc]])
}

/// `sᵀ W (A_filt ⊗ A_sub)^p s` with the product matrix built explicitly.
pub fn kernel_oracle(a_sub: &Array2<f64>, x_sub: &Array2<f64>, f: &KernelFilter, w: &Array2<f64>, p: usize) -> f64 {
    let s: Array1<f64> = vec_cm(&x_sub.dot(&f.features.t()));
    let ax = kron(&f.adjacency, a_sub);
    let mut power = Array2::eye(ax.nrows());
    for _ in 0..p {
        power = power.dot(&ax);
    }
    let n = s.len();
    s.dot(&w.slice(ndarray::s![..n, ..n]).dot(&power.dot(&s)))
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((r, c), || rng.gen_range(lo..hi))
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Array2<f64> {
    let mut a = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(density) {
                let w = rng.gen_range(0.1..1.0);
                a[[i, j]] = w;
                a[[j, i]] = w;
            }
        }
    }
    a
}

/// Random embedded predicate graph.
pub fn random_graph(seed: u64, n: usize, d: usize, density: f64) -> FolGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = (0..n)
        .map(|i| {
            let mut node = FolNode::predicate(Predicate::new(format!("P{i}"), vec!["x".into()]));
            node.embedding = Some((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
            node
        })
        .collect();
    let rels = [RelationType::Implies, RelationType::Conjunction, RelationType::Disjunction];
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(density) {
                edges.push(FolEdge {
                    src: i,
                    dst: j,
                    relation: rels[rng.gen_range(0..3)],
                });
            }
        }
    }
    FolGraph { nodes, edges }
}

/// Central finite differences of the loss for every parameter. Returns
/// `(tensor name, relative error)` per tensor, where the relative error is
/// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` (0 when both vanish).
pub fn gradient_check(
    prepared: &PreparedGraph,
    config: &KernelConfig,
    params: &ModelParams,
    gold: usize,
    step: f64,
) -> Vec<(String, f64)> {
    let trace = forward(prepared, config, params).unwrap();
    let (_, grad) = schemakernel::kernel::backward(prepared, config, params, &trace, gold).unwrap();
    let loss = |p: &ModelParams| forward(prepared, config, p).unwrap().loss(gold);
    let analytic: Vec<(String, Vec<f64>)> = grad.tensors().into_iter().map(|(n, t)| (n, t.to_vec())).collect();
    let mut out = Vec::new();
    for (ti, (name, g)) in analytic.iter().enumerate() {
        let mut num = vec![0.0; g.len()];
        for (i, slot) in num.iter_mut().enumerate() {
            let mut plus = params.clone();
            plus.tensors_mut()[ti][i] += step;
            let mut minus = params.clone();
            minus.tensors_mut()[ti][i] -= step;
            *slot = (loss(&plus) - loss(&minus)) / (2.0 * step);
        }
        let diff: f64 = g.iter().zip(&num).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let na = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nn = num.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = na.max(nn);
        out.push((name.clone(), if scale < 1e-12 { 0.0 } else { diff / scale }));
    }
    out
}
