//! Reference oracles for test suites.
//!
//! Everything here is written independently of the production kernels:
//! finite differences instead of the tape, dense matrices instead of
//! gather/scatter, per-segment loops instead of the scatter kernels.

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::graph::Graph;
use crate::layers::{BoundParams, LayerParams};
use crate::scatter::{ExecutionMode, ReduceMode};
use crate::tensor::Tensor;

/// Magnitude below which gradient entries are compared absolutely.
pub const REL_FLOOR: f64 = 1e-3;

pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut R) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(rows, cols, data).unwrap()
}

#[derive(Debug, Clone)]
pub struct GradReport {
    /// max over entries of |analytic - numeric| / max(|analytic|, |numeric|, REL_FLOOR)
    pub max_rel_error: f64,
    pub worst_input: usize,
    pub worst_entry: usize,
    pub entries_checked: usize,
}

/// Compares tape gradients of `f` against central finite differences for
/// every entry of every input.
pub fn fd_gradient_check<F>(inputs: &[Tensor], step: f64, f: F) -> Result<GradReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let tape = Tape::with_mode(ExecutionMode::Sequential);
        let vars: Vec<Var<'_>> = values.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&tape, &vars)?;
        out.value().item()
    };

    let tape = Tape::with_mode(ExecutionMode::Sequential);
    let vars: Vec<Var<'_>> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone().with_requires_grad(true)))
        .collect();
    let out = f(&tape, &vars)?;
    tape.backward(out)?;

    let mut report = GradReport {
        max_rel_error: 0.0,
        worst_input: 0,
        worst_entry: 0,
        entries_checked: 0,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = tape
            .grad(*var)
            .unwrap_or_else(|| Tensor::zeros(inputs[k].rows(), inputs[k].cols()));
        for e in 0..inputs[k].len() {
            let orig = inputs[k].data()[e];
            work[k].data_mut()[e] = orig + step;
            let up = eval(&work)?;
            work[k].data_mut()[e] = orig - step;
            let down = eval(&work)?;
            work[k].data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.data()[e];
            let denom = a.abs().max(numeric.abs()).max(REL_FLOOR);
            let rel = (a - numeric).abs() / denom;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_input = k;
                report.worst_entry = e;
            }
            report.entries_checked += 1;
        }
    }
    Ok(report)
}

/// Panics unless `f` passes the finite-difference check at 1e-4 with step 1e-5.
pub fn assert_gradients<F>(inputs: &[Tensor], f: F)
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let report = fd_gradient_check(inputs, 1e-5, f).expect("gradient check evaluation failed");
    assert!(
        report.max_rel_error <= 1e-4,
        "finite-difference mismatch: {report:?}"
    );
}

/// Finite-difference check over every parameter of `params` followed by
/// `inputs`. `f` receives the parameters bound in store order.
pub fn fd_layer_check<F>(params: &LayerParams, inputs: &[Tensor], step: f64, f: F) -> Result<GradReport>
where
    F: for<'t> Fn(&'t Tape, &BoundParams<'t>, &[Var<'t>]) -> Result<Var<'t>>,
{
    let np = params.len();
    let mut all: Vec<Tensor> = params.ids().map(|id| params.get(id).clone()).collect();
    all.extend_from_slice(inputs);
    fd_gradient_check(&all, step, |tape, vars| {
        let bound = BoundParams::from_vars(vars[..np].to_vec());
        f(tape, &bound, &vars[np..])
    })
}

/// [`fd_layer_check`] at step 1e-5, asserting 1e-4 relative agreement.
pub fn assert_layer_gradients<F>(params: &LayerParams, inputs: &[Tensor], f: F)
where
    F: for<'t> Fn(&'t Tape, &BoundParams<'t>, &[Var<'t>]) -> Result<Var<'t>>,
{
    let report = fd_layer_check(params, inputs, 1e-5, f).expect("gradient check evaluation failed");
    assert!(
        report.max_rel_error <= 1e-4,
        "finite-difference mismatch: {report:?}"
    );
}

/// Straightforward triple-loop product.
pub fn dense_matmul(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.cols(), b.rows());
    let mut out = Tensor::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += a.get(i, k) * b.get(k, j);
            }
            out.set(i, j, s);
        }
    }
    out
}

/// Dense matrix with `A[src][dst]` counting edges (multiplicities summed).
pub fn dense_adjacency(g: &Graph) -> Tensor {
    let n = g.num_nodes();
    let mut a = Tensor::zeros(n, n);
    for (s, d) in g.edges() {
        let v = a.get(s, d);
        a.set(s, d, v + 1.0);
    }
    a
}

/// `D^{-1/2} (A + I) D^{-1/2}` built densely from a graph *without*
/// self-loops, with degrees taken as row sums of `A + I`.
pub fn dense_gcn_matrix(g: &Graph) -> Tensor {
    let n = g.num_nodes();
    let mut a = Tensor::zeros(n, n);
    for (s, d) in g.edges() {
        if s != d {
            a.set(d, s, 1.0);
        }
    }
    for i in 0..n {
        a.set(i, i, 1.0);
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    for i in 0..n {
        for j in 0..n {
            let v = a.get(i, j);
            if v != 0.0 {
                a.set(i, j, v / (deg[i] * deg[j]).sqrt());
            }
        }
    }
    a
}

/// Per-segment reduction computed one segment at a time.
pub fn scatter_loop_oracle(src: &Tensor, index: &[usize], dim_size: usize, reduce: ReduceMode) -> Tensor {
    let cols = src.cols();
    let mut out = Tensor::zeros(dim_size, cols);
    let mut segments: Vec<Vec<usize>> = vec![Vec::new(); dim_size];
    for (k, &s) in index.iter().enumerate() {
        segments[s].push(k);
    }
    for (s, members) in segments.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        for c in 0..cols {
            let v = match reduce {
                ReduceMode::Add => members.iter().map(|&k| src.get(k, c)).sum(),
                ReduceMode::Mean => {
                    members.iter().map(|&k| src.get(k, c)).sum::<f64>() / members.len() as f64
                }
                ReduceMode::Max => members
                    .iter()
                    .map(|&k| src.get(k, c))
                    .fold(f64::NEG_INFINITY, f64::max),
            };
            out.set(s, c, v);
        }
    }
    out
}

/// Largest relative deviation with a floor of 1 on the denominator.
pub fn max_rel_diff(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}
