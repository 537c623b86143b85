//! CSR matrices and sparse-dense products: the baseline that gather/scatter
//! is measured against.
//!
//! Orientation: row `r` of [`to_csr`] is target node `r`, and entry `(r, c)`
//! holds the weight of edge `c -> r`, so `spmm(to_csr(g), x)` equals a
//! scatter-add over targets of `x` gathered at sources.

use std::sync::Arc;

use rayon::prelude::*;

use crate::autodiff::{BackwardContext, BackwardOp, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::Tensor;

/// Output rows per parallel task.
const MIN_ROWS: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Validates `row_ptr` monotonicity and strictly increasing columns per
    /// row.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != n_rows + 1 || row_ptr[0] != 0 || row_ptr[n_rows] != col_idx.len() {
            return Err(Error::invalid("csr: row_ptr must span [0, nnz] with n_rows + 1 entries"));
        }
        if col_idx.len() != values.len() {
            return Err(Error::dim(
                "csr",
                format!("{} columns vs {} values", col_idx.len(), values.len()),
            ));
        }
        for r in 0..n_rows {
            let (a, b) = (row_ptr[r], row_ptr[r + 1]);
            if b < a {
                return Err(Error::invalid("csr: row_ptr decreases"));
            }
            let cols = &col_idx[a..b];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!("csr: row {r} columns not strictly increasing")));
            }
            if let Some(&c) = cols.iter().find(|&&c| c >= n_cols) {
                return Err(Error::OutOfBounds {
                    op: "csr",
                    index: c,
                    size: n_cols,
                });
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Nonzero entries of `x`, row by row.
    pub fn from_dense(x: &Tensor) -> Self {
        let mut row_ptr = Vec::with_capacity(x.rows() + 1);
        let (mut col_idx, mut values) = (Vec::new(), Vec::new());
        row_ptr.push(0);
        for r in 0..x.rows() {
            for (c, &v) in x.row(r).iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n_rows: x.rows(),
            n_cols: x.cols(),
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Same sparsity pattern, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.nnz() {
            return Err(Error::dim("csr values", format!("{} values for {} entries", values.len(), self.nnz())));
        }
        Ok(Self {
            values,
            ..self.clone_structure()
        })
    }

    fn clone_structure(&self) -> Self {
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: Vec::new(),
        }
    }

    pub fn to_dense(&self) -> Tensor {
        let mut out = Tensor::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.set(r, self.col_idx[k], self.values[k]);
            }
        }
        out
    }

    /// Counting-sort transpose. Rows are visited in order, so the columns of
    /// every output row come out strictly increasing.
    pub fn transpose(&self) -> CsrMatrix {
        let mut row_ptr = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            row_ptr[c + 1] += 1;
        }
        for i in 0..self.n_cols {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut next = row_ptr.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                let slot = next[c];
                next[c] += 1;
                col_idx[slot] = r;
                values[slot] = self.values[k];
            }
        }
        CsrMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Divides every row by its value sum; rows summing to zero are left
    /// untouched. With unit edge weights this turns SpMM into mean
    /// aggregation.
    pub fn row_normalized(&self) -> CsrMatrix {
        let mut out = self.clone();
        for r in 0..self.n_rows {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            let s: f64 = self.values[span.clone()].iter().sum();
            if s != 0.0 {
                out.values[span].iter_mut().for_each(|v| *v /= s);
            }
        }
        out
    }

    /// `self · x`, parallel over output rows. Each row is written by exactly
    /// one task, so the result is deterministic.
    pub fn matmul_dense(&self, x: &Tensor) -> Result<Tensor> {
        if x.rows() != self.n_cols {
            return Err(Error::dim(
                "spmm",
                format!("{}x{} matrix times {}x{}", self.n_rows, self.n_cols, x.rows(), x.cols()),
            ));
        }
        let f = x.cols();
        let mut out = vec![0.0; self.n_rows * f];
        if f > 0 {
            out.par_chunks_mut(f)
                .with_min_len(MIN_ROWS)
                .enumerate()
                .for_each(|(r, row)| {
                    for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                        let w = self.values[k];
                        row.iter_mut()
                            .zip(x.row(self.col_idx[k]))
                            .for_each(|(o, v)| *o += w * v);
                    }
                });
        }
        Tensor::new(self.n_rows, f, out)
    }
}

/// Builds the target-major CSR of `g`; `weights[k]` belongs to edge `k`
/// (default 1). Duplicate edges merge with summed weights.
///
/// Input already ordered by `(target, source)` is copied directly; a
/// coalesced graph takes a stable counting sort by target; anything else is
/// fully sorted first.
pub fn to_csr(g: &Graph, weights: Option<&[f64]>) -> Result<CsrMatrix> {
    let e = g.num_edges();
    let n = g.num_nodes();
    if let Some(w) = weights {
        if w.len() != e {
            return Err(Error::dim("to_csr", format!("{} weights for {e} edges", w.len())));
        }
    }
    let weight = |k: usize| weights.map_or(1.0, |w| w[k]);
    let src = g.edge_index().src().values();
    let dst = g.edge_index().dst().values();

    let target_sorted = (1..e).all(|k| (dst[k - 1], src[k - 1]) < (dst[k], src[k]));
    let order: Vec<usize> = if target_sorted {
        (0..e).collect()
    } else if g.is_coalesced() {
        counting_order(dst, n)
    } else {
        let mut order: Vec<usize> = (0..e).collect();
        order.sort_by_key(|&k| (dst[k], src[k]));
        order
    };

    let mut row_ptr = vec![0usize; n + 1];
    let mut col_idx = Vec::with_capacity(e);
    let mut values = Vec::with_capacity(e);
    let mut prev: Option<(usize, usize)> = None;
    for &k in &order {
        let key = (dst[k], src[k]);
        if prev == Some(key) {
            *values.last_mut().expect("merged entry") += weight(k);
        } else {
            row_ptr[key.0 + 1] += 1;
            col_idx.push(key.1);
            values.push(weight(k));
            prev = Some(key);
        }
    }
    for r in 0..n {
        row_ptr[r + 1] += row_ptr[r];
    }
    Ok(CsrMatrix {
        n_rows: n,
        n_cols: n,
        row_ptr,
        col_idx,
        values,
    })
}

/// Stable permutation ordering positions by `keys` in `[0, n)`.
fn counting_order(keys: &[usize], n: usize) -> Vec<usize> {
    let mut start = vec![0usize; n + 1];
    for &k in keys {
        start[k + 1] += 1;
    }
    for i in 0..n {
        start[i + 1] += start[i];
    }
    let mut order = vec![0usize; keys.len()];
    for (pos, &k) in keys.iter().enumerate() {
        order[start[k]] = pos;
        start[k] += 1;
    }
    order
}

struct SpmmBackward {
    a: Arc<CsrMatrix>,
}

impl BackwardOp for SpmmBackward {
    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Tensor>>> {
        let at = self.a.transpose();
        Ok(vec![Some(at.matmul_dense(ctx.grad)?)])
    }
}

/// Differentiable `a · x` with respect to `x`; the backward pass builds
/// `aᵀ` on demand.
pub fn spmm<'t>(a: &Arc<CsrMatrix>, x: Var<'t>) -> Result<Var<'t>> {
    let out = a.matmul_dense(&x.value())?;
    x.tape()
        .record("spmm", out, &[x], SpmmBackward { a: Arc::clone(a) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::graph::erdos_renyi;
    use crate::scatter::{gather, scatter, ReduceMode};
    use crate::testing::{dense_adjacency, dense_matmul, max_rel_diff, uniform};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, src: Vec<usize>, dst: Vec<usize>) -> Graph {
        Graph::new(Tensor::zeros(n, 1), src, dst).unwrap()
    }

    #[test]
    fn dense_round_trip() {
        let x = Tensor::from_rows(&[[0.0, 2.0, 0.0], [0.0, 0.0, 0.0], [1.5, 0.0, -1.0]]);
        let a = CsrMatrix::from_dense(&x);
        assert_eq!((a.row_ptr(), a.col_idx()), (&[0, 1, 1, 3][..], &[1, 0, 2][..]));
        assert_eq!(a.to_dense(), x);
        let b = a.with_values(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(b.to_dense().data(), &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 3.0]);
        assert!(a.with_values(vec![1.0]).is_err());
    }

    #[test]
    fn hand_conversion() {
        let a = to_csr(&graph(2, vec![0, 1], vec![1, 0]), None).unwrap();
        assert_eq!(a.row_ptr(), &[0, 1, 2]);
        assert_eq!(a.col_idx(), &[1, 0]);
        assert_eq!(a.values(), &[1.0, 1.0]);
        let empty = to_csr(&graph(3, vec![], vec![]), None).unwrap();
        assert_eq!(empty.row_ptr(), &[0, 0, 0, 0]);
    }

    #[test]
    fn hand_products() {
        let x = Tensor::column(&[1.0, 2.0]);
        assert_eq!(CsrMatrix::identity(2).matmul_dense(&x).unwrap(), x);
        let swap = CsrMatrix::new(2, 2, vec![0, 1, 2], vec![1, 0], vec![1.0, 1.0]).unwrap();
        assert_eq!(swap.matmul_dense(&x).unwrap().data(), &[2.0, 1.0]);
        assert!(swap.matmul_dense(&Tensor::zeros(3, 1)).is_err());
    }

    #[test]
    fn constructor_checks_invariants() {
        assert!(CsrMatrix::new(2, 2, vec![0, 2, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::new(2, 2, vec![0, 1], vec![1], vec![1.0]).is_err());
        assert!(CsrMatrix::new(1, 2, vec![0, 1], vec![2], vec![1.0]).is_err());
    }

    #[test]
    fn all_three_paths_agree_with_dense_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = erdos_renyi(60, 5.0, true, &mut rng).unwrap();
        let dense_t = dense_adjacency(&g).transpose();

        // coalesced: counting-sort path
        assert_eq!(to_csr(&g, None).unwrap().to_dense(), dense_t);
        // shuffled with duplicates: full sort
        let mut keep: Vec<usize> = (0..g.num_edges()).rev().collect();
        keep.extend(0..10);
        let shuffled = g.select_edges(&keep);
        let mut dense_dup = dense_t.clone();
        for (s, d) in g.edges().take(10) {
            dense_dup.set(d, s, 2.0);
        }
        assert_eq!(to_csr(&shuffled, None).unwrap().to_dense(), dense_dup);
        // target-sorted: direct copy
        let mut by_target: Vec<usize> = (0..g.num_edges()).collect();
        let (src, dst): (Vec<_>, Vec<_>) = g.edges().unzip();
        by_target.sort_by_key(|&k| (dst[k], src[k]));
        let t = to_csr(&g.select_edges(&by_target), None).unwrap();
        assert_eq!(t.to_dense(), dense_t);
        assert_eq!(t, to_csr(&g, None).unwrap());
    }

    #[test]
    fn weights_follow_edges() {
        let g = graph(3, vec![2, 0, 2], vec![0, 1, 0]);
        let a = to_csr(&g, Some(&[1.0, 2.0, 4.0])).unwrap();
        assert_eq!(a.to_dense().data(), &[0.0, 0.0, 5.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(to_csr(&g, Some(&[1.0])).is_err());
    }

    #[test]
    fn transpose_round_trip() {
        let g = erdos_renyi(40, 4.0, true, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let a = to_csr(&g, None).unwrap();
        assert_eq!(a.transpose().to_dense(), a.to_dense().transpose());
        assert_eq!(a.transpose().transpose(), a);
    }

    #[test]
    fn mean_normalisation() {
        let g = graph(3, vec![0, 1, 1], vec![2, 2, 0]);
        let a = to_csr(&g, None).unwrap().row_normalized();
        let x = Tensor::column(&[2.0, 4.0, 8.0]);
        assert_eq!(a.matmul_dense(&x).unwrap().data(), &[4.0, 0.0, 3.0]);
    }

    #[test]
    fn spmm_matches_gather_scatter_and_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &deg in &[1.0, 4.0, 16.0] {
            let g = erdos_renyi(100, deg, false, &mut rng).unwrap();
            let a = Arc::new(to_csr(&g, None).unwrap());
            let x0 = uniform(100, 7, -1.0, 1.0, &mut rng);
            let upstream = uniform(100, 7, -1.0, 1.0, &mut rng);

            let tape = Tape::new();
            let x = tape.leaf(x0.clone().with_requires_grad(true));
            let y = spmm(&a, x).unwrap();
            let loss = y.mul(tape.constant(upstream.clone())).unwrap().sum().unwrap();
            tape.backward(loss).unwrap();

            let tape2 = Tape::new();
            let x2 = tape2.leaf(x0.clone().with_requires_grad(true));
            let m = gather(x2, g.edge_index().src()).unwrap();
            let y2 = scatter(m, g.edge_index().dst(), ReduceMode::Add).unwrap();
            let loss2 = y2.mul(tape2.constant(upstream)).unwrap().sum().unwrap();
            tape2.backward(loss2).unwrap();

            assert!(max_rel_diff(&y.value(), &y2.value()) < 1e-10);
            assert!(max_rel_diff(&tape.grad(x).unwrap(), &tape2.grad(x2).unwrap()) < 1e-10);
            let dense = dense_matmul(&dense_adjacency(&g).transpose(), &x0);
            assert!(max_rel_diff(&y.value(), &dense) < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn csr_invariants_hold(
            edges in prop::collection::vec((0usize..8, 0usize..8), 0..50)
        ) {
            let (src, dst): (Vec<_>, Vec<_>) = edges.iter().copied().unzip();
            let g = graph(8, src, dst);
            let a = to_csr(&g, None).unwrap();
            let rebuilt = CsrMatrix::new(8, 8, a.row_ptr().to_vec(), a.col_idx().to_vec(), a.values().to_vec());
            prop_assert!(rebuilt.is_ok());
            prop_assert_eq!(a.to_dense(), dense_adjacency(&g).transpose());
            prop_assert_eq!(a.values().iter().sum::<f64>() as usize, edges.len());
        }
    }
}
