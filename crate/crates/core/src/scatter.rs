//! Gather and scatter-reduce kernels.
//!
//! `gather` maps node-space rows into edge space (one row per index);
//! `scatter` reduces edge-space rows back into node segments. Together they
//! carry every message-passing layer in this crate.
//!
//! Two execution modes exist. [`ExecutionMode::Parallel`] splits the input
//! rows into chunks across the rayon pool and combines into the output only
//! through atomic read-modify-write (add) or compare-exchange (max), so the
//! summation order, and hence the last bits of add/mean, depends on
//! scheduling. [`ExecutionMode::Sequential`] walks rows in order and is
//! bitwise reproducible.
//!
//! Conventions: empty segments produce 0 in every mode and receive no
//! gradient; the gradient of `max` goes to the lowest row index among rows
//! attaining the maximum.

use std::sync::atomic::{AtomicU64, AtomicU8, AtomicUsize, Ordering};
use std::sync::Arc;

use rayon::prelude::*;

use crate::autodiff::{BackwardContext, BackwardOp, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Rows handled per parallel task before work is split further.
const MIN_CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReduceMode {
    Add,
    Mean,
    Max,
}

impl ReduceMode {
    pub const ALL: [ReduceMode; 3] = [ReduceMode::Add, ReduceMode::Mean, ReduceMode::Max];

    pub fn as_str(self) -> &'static str {
        match self {
            ReduceMode::Add => "add",
            ReduceMode::Mean => "mean",
            ReduceMode::Max => "max",
        }
    }
}

impl std::str::FromStr for ReduceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add" | "sum" => Ok(ReduceMode::Add),
            "mean" => Ok(ReduceMode::Mean),
            "max" => Ok(ReduceMode::Max),
            other => Err(Error::invalid(format!("unknown reduce mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for ReduceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExecutionMode {
    /// Chunked over the rayon pool; output cells written with atomics.
    Parallel,
    /// Single-threaded, row order; bitwise reproducible.
    Sequential,
}

static EXECUTION_MODE: AtomicU8 = AtomicU8::new(0);

/// Sets the process-wide default used by [`Tape::new`](crate::Tape::new).
/// Kernels themselves always take the mode explicitly.
pub fn set_execution_mode(mode: ExecutionMode) {
    let v = match mode {
        ExecutionMode::Parallel => 0,
        ExecutionMode::Sequential => 1,
    };
    EXECUTION_MODE.store(v, Ordering::SeqCst);
}

pub fn execution_mode() -> ExecutionMode {
    match EXECUTION_MODE.load(Ordering::SeqCst) {
        0 => ExecutionMode::Parallel,
        _ => ExecutionMode::Sequential,
    }
}

/// Row indices into a segment space of `dim_size` slots. Order is free and
/// duplicates are expected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexVector {
    values: Arc<[usize]>,
    dim_size: usize,
}

impl IndexVector {
    pub fn new(values: impl Into<Arc<[usize]>>, dim_size: usize) -> Result<Self> {
        let values = values.into();
        if let Some(&bad) = values.iter().find(|&&v| v >= dim_size) {
            return Err(Error::OutOfBounds {
                op: "index",
                index: bad,
                size: dim_size,
            });
        }
        Ok(Self { values, dim_size })
    }

    #[inline]
    pub fn values(&self) -> &[usize] {
        &self.values
    }

    #[inline]
    pub fn dim_size(&self) -> usize {
        self.dim_size
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of entries per segment.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0usize; self.dim_size];
        for &v in self.values.iter() {
            c[v] += 1;
        }
        c
    }
}

#[inline]
fn atomic_add(cell: &AtomicU64, v: f64) {
    let mut cur = cell.load(Ordering::Relaxed);
    loop {
        let next = (f64::from_bits(cur) + v).to_bits();
        match cell.compare_exchange_weak(cur, next, Ordering::Relaxed, Ordering::Relaxed) {
            Ok(_) => return,
            Err(seen) => cur = seen,
        }
    }
}

#[inline]
fn atomic_max(cell: &AtomicU64, v: f64) {
    let mut cur = cell.load(Ordering::Relaxed);
    while v > f64::from_bits(cur) {
        match cell.compare_exchange_weak(cur, v.to_bits(), Ordering::Relaxed, Ordering::Relaxed) {
            Ok(_) => return,
            Err(seen) => cur = seen,
        }
    }
}

fn atomic_buffer(len: usize, init: f64) -> Vec<AtomicU64> {
    (0..len).map(|_| AtomicU64::new(init.to_bits())).collect()
}

fn unwrap_atomic(buf: Vec<AtomicU64>) -> Vec<f64> {
    buf.into_iter().map(|a| f64::from_bits(a.into_inner())).collect()
}

fn chunk_len(rows: usize) -> usize {
    let threads = rayon::current_num_threads().max(1);
    (rows / (threads * 4)).max(MIN_CHUNK)
}

fn check_rows(op: &'static str, src: &Tensor, index: &IndexVector) -> Result<()> {
    if src.rows() != index.len() {
        return Err(Error::dim(
            op,
            format!("{} rows for {} indices", src.rows(), index.len()),
        ));
    }
    if index.dim_size() == 0 {
        return Err(Error::invalid(format!("{op} into zero segments")));
    }
    Ok(())
}

/// `out[k] = x[index[k]]`.
pub fn gather_rows(x: &Tensor, index: &IndexVector, mode: ExecutionMode) -> Result<Tensor> {
    let cols = x.cols();
    if let Some(&bad) = index.values().iter().find(|&&i| i >= x.rows()) {
        return Err(Error::OutOfBounds {
            op: "gather",
            index: bad,
            size: x.rows(),
        });
    }
    let mut out = vec![0.0; index.len() * cols];
    if cols == 0 {
        return Tensor::new(index.len(), 0, out);
    }
    let idx = index.values();
    let copy_row = |(k, row): (usize, &mut [f64])| row.copy_from_slice(x.row(idx[k]));
    match mode {
        ExecutionMode::Parallel => out
            .par_chunks_mut(cols)
            .with_min_len(chunk_len(idx.len()))
            .enumerate()
            .for_each(copy_row),
        ExecutionMode::Sequential => out.chunks_mut(cols).enumerate().for_each(copy_row),
    }
    Tensor::new(index.len(), cols, out)
}

/// Forward result of a scatter reduction together with what its backward
/// pass needs.
#[derive(Clone, Debug)]
pub struct ScatterOutput {
    pub out: Tensor,
    /// Segment sizes (mean only).
    pub counts: Option<Vec<usize>>,
    /// Per output cell, the source row holding the maximum, `usize::MAX`
    /// for empty segments (max only).
    pub argmax: Option<Vec<usize>>,
}

fn scatter_add_values(src: &Tensor, idx: &[usize], dim: usize, mode: ExecutionMode) -> Vec<f64> {
    let cols = src.cols();
    let data = src.data();
    match mode {
        ExecutionMode::Sequential => {
            let mut out = vec![0.0; dim * cols];
            for (k, &s) in idx.iter().enumerate() {
                let o = &mut out[s * cols..(s + 1) * cols];
                for (a, b) in o.iter_mut().zip(&data[k * cols..(k + 1) * cols]) {
                    *a += b;
                }
            }
            out
        }
        ExecutionMode::Parallel => {
            let out = atomic_buffer(dim * cols, 0.0);
            idx.par_iter()
                .enumerate()
                .with_min_len(chunk_len(idx.len()))
                .for_each(|(k, &s)| {
                    let row = &data[k * cols..(k + 1) * cols];
                    for (c, &v) in row.iter().enumerate() {
                        atomic_add(&out[s * cols + c], v);
                    }
                });
            unwrap_atomic(out)
        }
    }
}

fn divide_by_counts(values: &mut [f64], counts: &[usize], cols: usize) {
    for (s, &n) in counts.iter().enumerate() {
        if n > 0 {
            let n = n as f64;
            values[s * cols..(s + 1) * cols].iter_mut().for_each(|v| *v /= n);
        }
    }
}

/// Σ over segment rows of `src[k] - center[index[k]]`.
fn scatter_add_residual(
    src: &Tensor,
    idx: &[usize],
    center: &[f64],
    dim: usize,
    mode: ExecutionMode,
) -> Vec<f64> {
    let cols = src.cols();
    let data = src.data();
    match mode {
        ExecutionMode::Sequential => {
            let mut out = vec![0.0; dim * cols];
            for (k, &s) in idx.iter().enumerate() {
                let row = &data[k * cols..(k + 1) * cols];
                let m = &center[s * cols..(s + 1) * cols];
                let o = &mut out[s * cols..(s + 1) * cols];
                for ((o, &v), &m) in o.iter_mut().zip(row).zip(m) {
                    *o += v - m;
                }
            }
            out
        }
        ExecutionMode::Parallel => {
            let out = atomic_buffer(dim * cols, 0.0);
            idx.par_iter()
                .enumerate()
                .with_min_len(chunk_len(idx.len()))
                .for_each(|(k, &s)| {
                    for c in 0..cols {
                        let cell = s * cols + c;
                        atomic_add(&out[cell], data[k * cols + c] - center[cell]);
                    }
                });
            unwrap_atomic(out)
        }
    }
}

fn segment_counts(idx: &[usize], dim: usize, mode: ExecutionMode) -> Vec<usize> {
    match mode {
        ExecutionMode::Sequential => {
            let mut c = vec![0usize; dim];
            for &s in idx {
                c[s] += 1;
            }
            c
        }
        ExecutionMode::Parallel => {
            let c: Vec<AtomicUsize> = (0..dim).map(|_| AtomicUsize::new(0)).collect();
            idx.par_iter()
                .with_min_len(chunk_len(idx.len()))
                .for_each(|&s| {
                    c[s].fetch_add(1, Ordering::Relaxed);
                });
            c.into_iter().map(AtomicUsize::into_inner).collect()
        }
    }
}

fn scatter_max_values(
    src: &Tensor,
    idx: &[usize],
    dim: usize,
    mode: ExecutionMode,
) -> (Vec<f64>, Vec<usize>) {
    let cols = src.cols();
    let data = src.data();
    let (mut out, argmax) = match mode {
        ExecutionMode::Sequential => {
            // Max first, then the rows attaining it. Walking rows backwards
            // with an unconditional select leaves the lowest one and avoids
            // the unpredictable branch of tracking the argmax on the fly.
            let mut out = vec![f64::NEG_INFINITY; dim * cols];
            for (k, &s) in idx.iter().enumerate() {
                let row = &data[k * cols..(k + 1) * cols];
                for (o, &v) in out[s * cols..(s + 1) * cols].iter_mut().zip(row) {
                    *o = if v > *o { v } else { *o };
                }
            }
            let mut arg = vec![usize::MAX; dim * cols];
            for (k, &s) in idx.iter().enumerate().rev() {
                let row = &data[k * cols..(k + 1) * cols];
                let o = &out[s * cols..(s + 1) * cols];
                for ((a, &m), &v) in arg[s * cols..(s + 1) * cols].iter_mut().zip(o).zip(row) {
                    *a = if v == m { k } else { *a };
                }
            }
            (out, arg)
        }
        ExecutionMode::Parallel => {
            let maxima = atomic_buffer(dim * cols, f64::NEG_INFINITY);
            let chunk = chunk_len(idx.len());
            idx.par_iter()
                .enumerate()
                .with_min_len(chunk)
                .for_each(|(k, &s)| {
                    for c in 0..cols {
                        atomic_max(&maxima[s * cols + c], data[k * cols + c]);
                    }
                });
            let out = unwrap_atomic(maxima);
            let arg: Vec<AtomicUsize> = (0..dim * cols).map(|_| AtomicUsize::new(usize::MAX)).collect();
            idx.par_iter()
                .enumerate()
                .with_min_len(chunk)
                .for_each(|(k, &s)| {
                    for c in 0..cols {
                        let cell = s * cols + c;
                        if data[k * cols + c] == out[cell] {
                            arg[cell].fetch_min(k, Ordering::Relaxed);
                        }
                    }
                });
            (out, arg.into_iter().map(AtomicUsize::into_inner).collect())
        }
    };
    for (v, &a) in out.iter_mut().zip(&argmax) {
        if a == usize::MAX {
            *v = 0.0;
        }
    }
    (out, argmax)
}

/// Reduces rows of `src` into `index.dim_size()` segments.
pub fn scatter_reduce(
    src: &Tensor,
    index: &IndexVector,
    reduce: ReduceMode,
    mode: ExecutionMode,
) -> Result<ScatterOutput> {
    check_rows("scatter", src, index)?;
    let dim = index.dim_size();
    let cols = src.cols();
    let idx = index.values();
    let res = match reduce {
        ReduceMode::Add => ScatterOutput {
            out: Tensor::new(dim, cols, scatter_add_values(src, idx, dim, mode))?,
            counts: None,
            argmax: None,
        },
        ReduceMode::Mean => {
            let counts = segment_counts(idx, dim, mode);
            let mut means = scatter_add_values(src, idx, dim, mode);
            divide_by_counts(&mut means, &counts, cols);
            // One residual pass: mean += Σ(x - mean) / n. Recovers the exact
            // value for constant segments and tightens the rest.
            let mut resid = scatter_add_residual(src, idx, &means, dim, mode);
            divide_by_counts(&mut resid, &counts, cols);
            means.iter_mut().zip(&resid).for_each(|(m, r)| *m += r);
            ScatterOutput {
                out: Tensor::new(dim, cols, means)?,
                counts: Some(counts),
                argmax: None,
            }
        }
        ReduceMode::Max => {
            let (vals, argmax) = scatter_max_values(src, idx, dim, mode);
            ScatterOutput {
                out: Tensor::new(dim, cols, vals)?,
                counts: None,
                argmax: Some(argmax),
            }
        }
    };
    Ok(res)
}

/// Softmax taken independently inside each segment and column.
pub fn segment_softmax_values(values: &Tensor, index: &IndexVector, mode: ExecutionMode) -> Result<Tensor> {
    check_rows("segment_softmax", values, index)?;
    let cols = values.cols();
    let idx = index.values();
    let (maxima, _) = scatter_max_values(values, idx, index.dim_size(), mode);
    let mut shifted = values.clone();
    for (k, &s) in idx.iter().enumerate() {
        for c in 0..cols {
            let v = &mut shifted.data_mut()[k * cols + c];
            *v = (*v - maxima[s * cols + c]).exp();
        }
    }
    let sums = scatter_add_values(&shifted, idx, index.dim_size(), mode);
    for (k, &s) in idx.iter().enumerate() {
        for c in 0..cols {
            shifted.data_mut()[k * cols + c] /= sums[s * cols + c];
        }
    }
    Ok(shifted)
}

struct GatherBackward {
    index: IndexVector,
}

impl BackwardOp for GatherBackward {
    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Tensor>>> {
        let x = ctx.inputs[0];
        let g = scatter_add_values(ctx.grad, self.index.values(), x.rows(), ctx.mode);
        Ok(vec![Some(Tensor::new(x.rows(), x.cols(), g)?)])
    }
}

struct ScatterBackward {
    index: IndexVector,
    reduce: ReduceMode,
    counts: Option<Vec<usize>>,
    argmax: Option<Vec<usize>>,
}

impl BackwardOp for ScatterBackward {
    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Tensor>>> {
        let g = ctx.grad;
        let src = ctx.inputs[0];
        let cols = src.cols();
        let idx = self.index.values();
        let grad = match self.reduce {
            ReduceMode::Add => gather_rows(g, &self.index, ctx.mode)?,
            ReduceMode::Mean => {
                let counts = self.counts.as_ref().expect("mean counts");
                let mut out = gather_rows(g, &self.index, ctx.mode)?;
                for (k, &s) in idx.iter().enumerate() {
                    let inv = 1.0 / counts[s] as f64;
                    out.data_mut()[k * cols..(k + 1) * cols]
                        .iter_mut()
                        .for_each(|v| *v *= inv);
                }
                out
            }
            ReduceMode::Max => {
                let argmax = self.argmax.as_ref().expect("max argmax");
                let mut out = Tensor::zeros(src.rows(), cols);
                for (cell, &k) in argmax.iter().enumerate() {
                    if k != usize::MAX {
                        let c = cell % cols;
                        out.data_mut()[k * cols + c] += g.data()[cell];
                    }
                }
                out
            }
        };
        Ok(vec![Some(grad)])
    }
}

struct SegmentSoftmaxBackward {
    index: IndexVector,
}

impl BackwardOp for SegmentSoftmaxBackward {
    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Tensor>>> {
        // dv = y ⊙ (g − Σ_segment g ⊙ y)
        let y = ctx.output;
        let g = ctx.grad;
        let cols = y.cols();
        let gy = Tensor::new(
            y.rows(),
            cols,
            y.data().iter().zip(g.data()).map(|(a, b)| a * b).collect(),
        )?;
        let sums = scatter_add_values(&gy, self.index.values(), self.index.dim_size(), ctx.mode);
        let mut out = Tensor::zeros(y.rows(), cols);
        for (k, &s) in self.index.values().iter().enumerate() {
            for c in 0..cols {
                let i = k * cols + c;
                out.data_mut()[i] = y.data()[i] * (g.data()[i] - sums[s * cols + c]);
            }
        }
        Ok(vec![Some(out)])
    }
}

/// Differentiable gather. Backward is a scatter-add into the rows of `x`.
pub fn gather<'t>(x: Var<'t>, index: &IndexVector) -> Result<Var<'t>> {
    let tape = x.tape();
    let out = gather_rows(&x.value(), index, tape.mode())?;
    tape.record(
        "gather",
        out,
        &[x],
        GatherBackward {
            index: index.clone(),
        },
    )
}

/// Differentiable scatter reduction into `index.dim_size()` rows.
pub fn scatter<'t>(src: Var<'t>, index: &IndexVector, reduce: ReduceMode) -> Result<Var<'t>> {
    let tape = src.tape();
    let res = scatter_reduce(&src.value(), index, reduce, tape.mode())?;
    tape.record(
        "scatter",
        res.out,
        &[src],
        ScatterBackward {
            index: index.clone(),
            reduce,
            counts: res.counts,
            argmax: res.argmax,
        },
    )
}

/// Differentiable per-segment softmax.
pub fn segment_softmax<'t>(values: Var<'t>, index: &IndexVector) -> Result<Var<'t>> {
    let tape = values.tape();
    let out = segment_softmax_values(&values.value(), index, tape.mode())?;
    tape.record(
        "segment_softmax",
        out,
        &[values],
        SegmentSoftmaxBackward {
            index: index.clone(),
        },
    )
}
