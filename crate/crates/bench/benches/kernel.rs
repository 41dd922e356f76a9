use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use schemakernel::fol::{FolEdge, FolGraph, FolNode, Predicate, RelationType};
use schemakernel::kernel::{backward, forward, rw_kernel, KernelConfig, KernelFilter, ModelParams, PreparedGraph, WMatrix};

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.gen_range(-1.0..1.0))
}

fn graph(seed: u64, n: usize, d: usize) -> FolGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = (0..n)
        .map(|i| {
            let mut node = FolNode::predicate(Predicate::new(format!("P{i}"), vec!["x".into()]));
            node.embedding = Some((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
            node
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(0.3) {
                edges.push(FolEdge {
                    src: i,
                    dst: j,
                    relation: RelationType::Implies,
                });
            }
        }
    }
    FolGraph { nodes, edges }
}

fn bench_rw_kernel(c: &mut Criterion) {
    let mut group = c.benchmark_group("rw_kernel");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let d = 384;
    for &(n_sub, n_filt) in &[(4usize, 3usize), (8, 6), (12, 8)] {
        let a = random_matrix(&mut rng, n_sub, n_sub);
        let x = random_matrix(&mut rng, n_sub, d);
        let filter = KernelFilter {
            adjacency: random_matrix(&mut rng, n_filt, n_filt),
            features: random_matrix(&mut rng, n_filt, d),
        };
        let w = WMatrix::identity(n_sub * n_filt, false);
        group.bench_with_input(BenchmarkId::new("p2", format!("{n_sub}x{n_filt}")), &(), |b, _| {
            b.iter(|| rw_kernel(black_box(a.view()), black_box(x.view()), &filter, &w, 2).unwrap())
        });
    }
    group.finish();
}

fn bench_model(c: &mut Criterion) {
    let cfg = KernelConfig::default();
    let d = 128;
    let params = ModelParams::random(&cfg, d, 3).unwrap();
    let prepared = PreparedGraph::new(&graph(5, 10, d), &cfg).unwrap();
    c.bench_function("forward_10_nodes", |b| b.iter(|| forward(black_box(&prepared), &cfg, &params).unwrap()));
    let trace = forward(&prepared, &cfg, &params).unwrap();
    c.bench_function("backward_10_nodes", |b| {
        b.iter(|| backward(black_box(&prepared), &cfg, &params, &trace, 1).unwrap())
    });
}

criterion_group!(benches, bench_rw_kernel, bench_model);
criterion_main!(benches);
