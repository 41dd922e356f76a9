use ndarray::{s, Array1, Array2, ArrayView2, ShapeBuilder};
use serde::{Deserialize, Serialize};

use super::KernelError;

/// The learnable matrix between `sᵀ` and `A_×^p s`, over the padded product
/// dimension `n_sub · n_filt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "lowercase")]
pub enum WMatrix {
    Dense(Array2<f64>),
    Diagonal(Array1<f64>),
}

impl WMatrix {
    pub fn identity(n: usize, diagonal: bool) -> Self {
        if diagonal {
            WMatrix::Diagonal(Array1::ones(n))
        } else {
            WMatrix::Dense(Array2::eye(n))
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            WMatrix::Dense(m) => m.nrows(),
            WMatrix::Diagonal(v) => v.len(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            WMatrix::Dense(m) => WMatrix::Dense(Array2::zeros(m.raw_dim())),
            WMatrix::Diagonal(v) => WMatrix::Diagonal(Array1::zeros(v.len())),
        }
    }

    /// `W[..n, ..n] · v`.
    fn apply(&self, v: &Array1<f64>) -> Array1<f64> {
        let n = v.len();
        match self {
            WMatrix::Dense(m) => m.slice(s![..n, ..n]).dot(v),
            WMatrix::Diagonal(d) => &d.slice(s![..n]) * v,
        }
    }

    /// `W[..n, ..n]ᵀ · v`.
    fn apply_t(&self, v: &Array1<f64>) -> Array1<f64> {
        let n = v.len();
        match self {
            WMatrix::Dense(m) => m.slice(s![..n, ..n]).t().dot(v),
            WMatrix::Diagonal(d) => &d.slice(s![..n]) * v,
        }
    }

    /// Adds `scale · a bᵀ` to the leading block (only the diagonal for a
    /// diagonal W).
    fn add_outer(&mut self, scale: f64, a: &Array1<f64>, b: &Array1<f64>) {
        let n = a.len();
        match self {
            WMatrix::Dense(m) => {
                let mut block = m.slice_mut(s![..n, ..n]);
                for (i, &ai) in a.iter().enumerate() {
                    if ai == 0.0 {
                        continue;
                    }
                    let f = scale * ai;
                    block.row_mut(i).scaled_add(f, b);
                }
            }
            WMatrix::Diagonal(d) => {
                let mut head = d.slice_mut(s![..n]);
                head.zip_mut_with(&(a * b), |x, &y| *x += scale * y);
            }
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        match self {
            WMatrix::Dense(m) => m.as_slice().expect("standard layout"),
            WMatrix::Diagonal(v) => v.as_slice().expect("standard layout"),
        }
    }

    pub fn as_slice_mut(&mut self) -> &mut [f64] {
        match self {
            WMatrix::Dense(m) => m.as_slice_mut().expect("standard layout"),
            WMatrix::Diagonal(v) => v.as_slice_mut().expect("standard layout"),
        }
    }
}

/// A learnable graph: weighted adjacency plus one feature row per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelFilter {
    pub adjacency: Array2<f64>,
    pub features: Array2<f64>,
}

impl KernelFilter {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            adjacency: Array2::zeros(self.adjacency.raw_dim()),
            features: Array2::zeros(self.features.raw_dim()),
        }
    }
}

/// Column-major vectorization.
pub fn vec_cm(m: &Array2<f64>) -> Array1<f64> {
    m.t().iter().copied().collect()
}

/// Inverse of [`vec_cm`].
pub fn unvec_cm(v: Array1<f64>, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_vec((rows, cols).f(), v.to_vec()).expect("length matches shape")
}

fn check_shapes(a_sub: ArrayView2<f64>, x_sub: ArrayView2<f64>, f: &KernelFilter, w: &WMatrix) -> Result<(), KernelError> {
    let n_sub = a_sub.nrows();
    let mismatch = |what, expected, got| Err(KernelError::ShapeMismatch { what, expected, got });
    if a_sub.ncols() != n_sub {
        return mismatch("subgraph adjacency columns", n_sub, a_sub.ncols());
    }
    if x_sub.nrows() != n_sub {
        return mismatch("subgraph feature rows", n_sub, x_sub.nrows());
    }
    if f.features.ncols() != x_sub.ncols() {
        return mismatch("filter feature dimension", x_sub.ncols(), f.features.ncols());
    }
    let m = f.features.nrows();
    if f.adjacency.dim() != (m, m) {
        return mismatch("filter adjacency size", m, f.adjacency.nrows());
    }
    if n_sub * m > w.dim() {
        return mismatch("product dimension within W", w.dim(), n_sub * m);
    }
    Ok(())
}

/// `T_0 = S`, `T_{j+1} = A_sub T_j A_filtᵀ`; returns `[T_0, …, T_p]`.
fn walk(a_sub: ArrayView2<f64>, s_mat: Array2<f64>, a_f: &Array2<f64>, p: usize) -> Vec<Array2<f64>> {
    let mut ts = Vec::with_capacity(p + 1);
    ts.push(s_mat);
    for j in 0..p {
        let next = a_sub.dot(&ts[j]).dot(&a_f.t());
        ts.push(next);
    }
    ts
}

/// p-step random-walk kernel `sᵀ W A_×^p s` between a padded subgraph and a
/// filter.
///
/// `S = X_sub X_filtᵀ` and `s = vec(S)` (column-major). The product-graph
/// power is applied through `A_× vec(S) = vec(A_sub S A_filtᵀ)`, so the
/// Kronecker matrix is never built. A filter with fewer than `n_filt` nodes
/// is treated as zero-padded: its `vec(S)` is a prefix of the padded one,
/// so only the leading block of `W` is used.
pub fn rw_kernel(
    a_sub: ArrayView2<f64>,
    x_sub: ArrayView2<f64>,
    filter: &KernelFilter,
    w: &WMatrix,
    p: usize,
) -> Result<f64, KernelError> {
    check_shapes(a_sub, x_sub, filter, w)?;
    let s_mat = x_sub.dot(&filter.features.t());
    let s = vec_cm(&s_mat);
    let ts = walk(a_sub, s_mat, &filter.adjacency, p);
    let t = vec_cm(&ts[p]);
    Ok(s.dot(&w.apply(&t)))
}

/// Accumulates `gk · ∂k/∂·` for one kernel evaluation into the filter and
/// W gradients, and returns `gk · ∂k/∂X_sub`.
pub fn rw_kernel_backward(
    a_sub: ArrayView2<f64>,
    x_sub: ArrayView2<f64>,
    filter: &KernelFilter,
    w: &WMatrix,
    p: usize,
    gk: f64,
    grad_filter: &mut KernelFilter,
    grad_w: &mut WMatrix,
) -> Result<Array2<f64>, KernelError> {
    check_shapes(a_sub, x_sub, filter, w)?;
    let (n_sub, m) = (a_sub.nrows(), filter.len());
    let s_mat = x_sub.dot(&filter.features.t());
    let s = vec_cm(&s_mat);
    let ts = walk(a_sub, s_mat, &filter.adjacency, p);
    let t = vec_cm(&ts[p]);

    grad_w.add_outer(gk, &s, &t);
    let mut ds = unvec_cm(w.apply(&t) * gk, n_sub, m);
    let mut g = unvec_cm(w.apply_t(&s) * gk, n_sub, m);
    for j in (1..=p).rev() {
        let lhs = a_sub.dot(&ts[j - 1]);
        grad_filter.adjacency += &g.t().dot(&lhs);
        g = a_sub.t().dot(&g).dot(&filter.adjacency);
    }
    ds += &g;
    grad_filter.features += &ds.t().dot(&x_sub);
    Ok(ds.dot(&filter.features))
}

/// Indices of the `g` largest scores (ties to the smaller index), ascending.
pub fn topg_select(scores: &[f64], g: usize) -> Result<Vec<usize>, KernelError> {
    if g == 0 || g > scores.len() {
        return Err(KernelError::InvalidG { g, filters: scores.len() });
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(g);
    idx.sort_unstable();
    Ok(idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Explicit Kronecker product, for oracles only.
    fn kron(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
        let (ar, ac) = a.dim();
        let (br, bc) = b.dim();
        Array2::from_shape_fn((ar * br, ac * bc), |(i, j)| a[[i / br, j / bc]] * b[[i % br, j % bc]])
    }

    fn oracle(a_sub: &Array2<f64>, x_sub: &Array2<f64>, f: &KernelFilter, p: usize) -> f64 {
        let s = vec_cm(&x_sub.dot(&f.features.t()));
        let ax = kron(&f.adjacency, a_sub);
        let mut v = s.clone();
        for _ in 0..p {
            v = ax.dot(&v);
        }
        s.dot(&v)
    }

    fn edge() -> Array2<f64> {
        array![[0.0, 1.0], [1.0, 0.0]]
    }

    #[test]
    fn vec_identity_holds() {
        let a = array![[1.0, 2.0], [0.5, -1.0]];
        let b = array![[0.0, 1.0, 2.0], [3.0, 4.0, 5.0], [6.0, 7.0, -8.0]];
        let s = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let lhs = kron(&a, &b).dot(&vec_cm(&s));
        let rhs = vec_cm(&b.dot(&s).dot(&a.t()));
        assert_eq!(lhs, rhs);
        assert_eq!(unvec_cm(vec_cm(&s), 3, 2), s);
    }

    #[test]
    fn single_edges_with_unit_features() {
        // The 4-node product graph of two edges has 4 directed length-1
        // walks, each contributing s_start · s_end = 1.
        let f = KernelFilter {
            adjacency: edge(),
            features: Array2::ones((2, 1)),
        };
        let k = rw_kernel(edge().view(), Array2::ones((2, 1)).view(), &f, &WMatrix::identity(4, false), 1).unwrap();
        assert_eq!(k, 4.0);
    }

    #[test]
    fn zero_adjacency_gives_zero() {
        let f = KernelFilter {
            adjacency: edge(),
            features: Array2::ones((2, 3)),
        };
        for p in 1..4 {
            let k = rw_kernel(Array2::zeros((3, 3)).view(), Array2::ones((3, 3)).view(), &f, &WMatrix::identity(6, false), p).unwrap();
            assert_eq!(k, 0.0);
        }
    }

    #[test]
    fn triangles_match_explicit_kronecker_power() {
        let tri = Array2::from_shape_fn((3, 3), |(i, j)| if i == j { 0.0 } else { 1.0 });
        let f = KernelFilter {
            adjacency: tri.clone(),
            features: Array2::ones((3, 1)),
        };
        let x = Array2::ones((3, 1));
        let k = rw_kernel(tri.view(), x.view(), &f, &WMatrix::identity(9, false), 2).unwrap();
        let o = oracle(&tri, &x, &f, 2);
        // Each triangle has 3·2·2 = 12 length-2 walks, so the product graph has 12·12.
        assert_eq!(o, 144.0);
        assert!((k - o).abs() <= 1e-9 * o.abs());
    }

    #[test]
    fn padding_rows_do_not_change_the_kernel() {
        let a = array![[0.0, 0.7], [0.7, 0.0]];
        let x = array![[0.3, -1.0], [2.0, 0.5]];
        let f = KernelFilter {
            adjacency: array![[0.0, 1.0, 0.2], [1.0, 0.0, 0.0], [0.2, 0.0, 0.0]],
            features: array![[1.0, 0.0], [0.5, 0.5], [-0.2, 1.0]],
        };
        let k2 = rw_kernel(a.view(), x.view(), &f, &WMatrix::identity(6, false), 2).unwrap();
        let mut a4 = Array2::zeros((4, 4));
        a4.slice_mut(s![..2, ..2]).assign(&a);
        let mut x4 = Array2::zeros((4, 2));
        x4.slice_mut(s![..2, ..]).assign(&x);
        let k4 = rw_kernel(a4.view(), x4.view(), &f, &WMatrix::identity(12, false), 2).unwrap();
        assert!((k2 - k4).abs() < 1e-12);
    }

    #[test]
    fn diagonal_identity_equals_dense_identity() {
        let a = array![[0.0, 0.7], [0.7, 0.0]];
        let x = array![[0.3, -1.0], [2.0, 0.5]];
        let f = KernelFilter {
            adjacency: edge(),
            features: array![[1.0, 0.0], [0.5, 0.5]],
        };
        let dense = rw_kernel(a.view(), x.view(), &f, &WMatrix::identity(4, false), 3).unwrap();
        let diag = rw_kernel(a.view(), x.view(), &f, &WMatrix::identity(4, true), 3).unwrap();
        assert!((dense - diag).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let f = KernelFilter {
            adjacency: edge(),
            features: Array2::ones((2, 2)),
        };
        let r = rw_kernel(edge().view(), Array2::ones((2, 3)).view(), &f, &WMatrix::identity(4, false), 1);
        assert!(matches!(r, Err(KernelError::ShapeMismatch { .. })));
        let r = rw_kernel(edge().view(), Array2::ones((2, 2)).view(), &f, &WMatrix::identity(3, false), 1);
        assert!(matches!(r, Err(KernelError::ShapeMismatch { .. })));
    }

    #[test]
    fn topg_cases() {
        assert_eq!(topg_select(&[0.2, 0.9, 0.5], 2).unwrap(), vec![1, 2]);
        assert_eq!(topg_select(&[1.0, 1.0, 1.0], 2).unwrap(), vec![0, 1]);
        assert_eq!(topg_select(&[3.0, 1.0, 2.0], 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(topg_select(&[1.0], 2), Err(KernelError::InvalidG { g: 2, filters: 1 }));
        assert_eq!(topg_select(&[1.0], 0), Err(KernelError::InvalidG { g: 0, filters: 1 }));
    }

    fn num_grad(f: impl Fn(f64) -> f64) -> f64 {
        let h = 1e-5;
        (f(h) - f(-h)) / (2.0 * h)
    }

    #[test]
    fn single_kernel_gradients_match_finite_differences() {
        let a = array![[0.0, 0.7, 0.1], [0.7, 0.0, 0.4], [0.1, 0.4, 0.0]];
        let x = array![[0.3, -1.0], [2.0, 0.5], [-0.4, 0.8]];
        let f = KernelFilter {
            adjacency: array![[0.1, 1.0], [0.3, -0.2]],
            features: array![[1.0, 0.2], [0.5, -0.5]],
        };
        let w = WMatrix::Dense(Array2::from_shape_fn((6, 6), |(i, j)| ((i * 7 + j * 3) % 5) as f64 * 0.1 - 0.2));
        let p = 2;
        let gk = 1.7;
        let mut gf = f.zeros_like();
        let mut gw = w.zeros_like();
        let dx = rw_kernel_backward(a.view(), x.view(), &f, &w, p, gk, &mut gf, &mut gw).unwrap();
        let k = |f: &KernelFilter, x: &Array2<f64>, w: &WMatrix| gk * rw_kernel(a.view(), x.view(), f, w, p).unwrap();

        for idx in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let fd = num_grad(|h| {
                let mut f2 = f.clone();
                f2.adjacency[idx] += h;
                k(&f2, &x, &w)
            });
            assert!((fd - gf.adjacency[idx]).abs() < 1e-6, "adj {idx:?}: {fd} vs {}", gf.adjacency[idx]);
            let fd = num_grad(|h| {
                let mut f2 = f.clone();
                f2.features[idx] += h;
                k(&f2, &x, &w)
            });
            assert!((fd - gf.features[idx]).abs() < 1e-6);
        }
        for idx in [(0, 0), (2, 1), (1, 0)] {
            let fd = num_grad(|h| {
                let mut x2 = x.clone();
                x2[idx] += h;
                k(&f, &x2, &w)
            });
            assert!((fd - dx[idx]).abs() < 1e-6);
        }
        let WMatrix::Dense(wm) = &w else { unreachable!() };
        let WMatrix::Dense(gwm) = &gw else { unreachable!() };
        for idx in [(0, 0), (5, 2), (3, 4)] {
            let fd = num_grad(|h| {
                let mut w2 = wm.clone();
                w2[idx] += h;
                k(&f, &x, &WMatrix::Dense(w2))
            });
            assert!((fd - gwm[idx]).abs() < 1e-6);
        }
    }
}
