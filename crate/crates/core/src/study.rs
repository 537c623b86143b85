//! Runtime study of gather/scatter (GS) against SpMM on random graphs.
//!
//! For every degree one directed G(n, p) graph is drawn. The coalesced
//! layout keeps its `(source, target)` order; the non-coalesced layout
//! applies a seeded shuffle to the edge list. Per configuration:
//!
//! - GS forward is `scatter(gather(x, src), dst)`; backward is the tape's
//!   reverse pass through both.
//! - SpMM forward is `A x` with `A` the target-major CSR. Under the
//!   coalesced layout `A` is built before timing; under the non-coalesced
//!   layout the CSR conversion, including its sort, is inside the timed
//!   region. Backward is `Aᵀ g`, with the transpose built on demand.
//! - SpMM covers `add` and `mean` (row-normalised `A`); `max` has no
//!   matrix-product form and only GS rows are emitted for it.

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{erdos_renyi_with_features, Graph};
use crate::scatter::{gather, scatter, ExecutionMode, ReduceMode};
use crate::sparse::{spmm, to_csr, CsrMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Gs,
    Spmm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Coalesced,
    NonCoalesced,
}

impl Layout {
    pub const ALL: [Layout; 2] = [Layout::Coalesced, Layout::NonCoalesced];

    pub fn as_str(self) -> &'static str {
        match self {
            Layout::Coalesced => "coalesced",
            Layout::NonCoalesced => "non_coalesced",
        }
    }
}

impl std::str::FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Layout::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown layout {s:?}, expected coalesced or non_coalesced")))
    }
}

fn reduce_name<S: Serializer>(r: &ReduceMode, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(r.as_str())
}

/// One timed configuration. `per_iter_us = elapsed_s · 1e6 / repeats`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRecord {
    pub op: Op,
    #[serde(serialize_with = "reduce_name")]
    pub reduce: ReduceMode,
    pub direction: Direction,
    pub layout: Layout,
    pub avg_degree: f64,
    pub n_nodes: usize,
    pub repeats: usize,
    pub elapsed_s: f64,
    pub per_iter_us: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub nodes: usize,
    pub degrees: Vec<f64>,
    pub repeats: usize,
    pub features: usize,
    pub modes: Vec<ReduceMode>,
    pub layouts: Vec<Layout>,
    pub directions: Vec<Direction>,
    pub warmup: usize,
    pub seed: u64,
    /// Execution mode of the GS kernels.
    pub mode: ExecutionMode,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            nodes: 10_000,
            degrees: vec![2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0],
            repeats: 100,
            features: 16,
            modes: vec![ReduceMode::Add],
            layouts: Layout::ALL.to_vec(),
            directions: vec![Direction::Forward, Direction::Backward],
            warmup: 10,
            seed: 0,
            mode: ExecutionMode::Parallel,
        }
    }
}

/// Relative agreement threshold of the pre-timing check.
pub const PRECHECK_TOL: f64 = 1e-10;

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= PRECHECK_TOL * y.abs().max(1.0))
}

struct Setup {
    graph: Graph,
    /// Target-major CSR, row-normalised for `mean`.
    csr: Option<Arc<CsrMatrix>>,
}

/// Returns the input leaf and the aggregated output.
fn gs_forward<'t>(tape: &'t Tape, g: &Graph, reduce: ReduceMode) -> Result<(Var<'t>, Var<'t>)> {
    let x = tape.param(g.x());
    let out = scatter(gather(x, g.edge_index().src())?, g.edge_index().dst(), reduce)?;
    Ok((x, out))
}

fn build_csr(g: &Graph, reduce: ReduceMode) -> Result<CsrMatrix> {
    let a = to_csr(g, None)?;
    Ok(if reduce == ReduceMode::Mean { a.row_normalized() } else { a })
}

fn spmm_forward<'t>(tape: &'t Tape, s: &Setup, reduce: ReduceMode) -> Result<(Var<'t>, Var<'t>)> {
    let x = tape.param(s.graph.x());
    let out = match &s.csr {
        Some(a) => spmm(a, x)?,
        None => spmm(&Arc::new(build_csr(&s.graph, reduce)?), x)?,
    };
    Ok((x, out))
}

fn forward<'t>(tape: &'t Tape, op: Op, s: &Setup, reduce: ReduceMode) -> Result<(Var<'t>, Var<'t>)> {
    match op {
        Op::Gs => gs_forward(tape, &s.graph, reduce),
        Op::Spmm => spmm_forward(tape, s, reduce),
    }
}

/// Output and the gradient of `Σ out` with respect to the features.
fn value_and_grad(op: Op, s: &Setup, reduce: ReduceMode, mode: ExecutionMode) -> Result<(Vec<f64>, Vec<f64>)> {
    let tape = Tape::with_mode(mode);
    let (x, out) = forward(&tape, op, s, reduce)?;
    out.sum()?.backward()?;
    let grad = x.grad().ok_or_else(|| Error::InvalidState("no feature gradient".into()))?;
    Ok((out.value().data().to_vec(), grad.data().to_vec()))
}

/// GS must match SpMM (or, for `max`, the sequential kernel bitwise) in
/// output and feature gradient.
fn precheck(s: &Setup, reduce: ReduceMode, mode: ExecutionMode) -> Result<bool> {
    let gs = value_and_grad(Op::Gs, s, reduce, mode)?;
    Ok(match reduce {
        ReduceMode::Max => {
            let seq = value_and_grad(Op::Gs, s, reduce, ExecutionMode::Sequential)?;
            gs == seq
        }
        _ => {
            let sp = value_and_grad(Op::Spmm, s, reduce, mode)?;
            close(&gs.0, &sp.0) && close(&gs.1, &sp.1)
        }
    })
}

fn time(op: Op, dir: Direction, s: &Setup, reduce: ReduceMode, cfg: &BenchConfig) -> Result<Duration> {
    let mut total = Duration::ZERO;
    for i in 0..cfg.warmup + cfg.repeats {
        let tape = Tape::with_mode(cfg.mode);
        let elapsed = match dir {
            Direction::Forward => {
                let start = Instant::now();
                forward(&tape, op, s, reduce)?;
                start.elapsed()
            }
            Direction::Backward => {
                let (_, out) = forward(&tape, op, s, reduce)?;
                let loss = out.sum()?;
                let start = Instant::now();
                loss.backward()?;
                start.elapsed()
            }
        };
        if i >= cfg.warmup {
            total += elapsed;
        }
    }
    Ok(total)
}

fn shuffled(g: &Graph, seed: u64) -> Graph {
    let mut order: Vec<usize> = (0..g.num_edges()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    g.select_edges(&order)
}

/// Runs every configuration of `cfg`, one at a time. Configurations that
/// fail the numerical pre-check are logged and produce no rows.
pub fn bench_scatter_vs_spmm(cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    if cfg.degrees.is_empty() {
        return Err(Error::invalid("benchmark needs at least one degree"));
    }
    if cfg.repeats == 0 {
        return Err(Error::invalid("benchmark needs repeats >= 1"));
    }
    let mut records = Vec::new();
    for (k, &degree) in cfg.degrees.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(k as u64));
        let base = erdos_renyi_with_features(cfg.nodes, degree, true, cfg.features, &mut rng)?;
        for &layout in &cfg.layouts {
            let graph = match layout {
                Layout::Coalesced => base.clone(),
                Layout::NonCoalesced => shuffled(&base, cfg.seed.wrapping_add(1000 + k as u64)),
            };
            for &reduce in &cfg.modes {
                let csr = match layout {
                    Layout::Coalesced if reduce != ReduceMode::Max => Some(Arc::new(build_csr(&graph, reduce)?)),
                    _ => None,
                };
                let setup = Setup { graph: graph.clone(), csr };
                if !precheck(&setup, reduce, cfg.mode)? {
                    warn!("GS and SpMM disagree at degree {degree}, {reduce}, {}; skipped", layout.as_str());
                    continue;
                }
                let ops: &[Op] = if reduce == ReduceMode::Max { &[Op::Gs] } else { &[Op::Gs, Op::Spmm] };
                for &op in ops {
                    for &dir in &cfg.directions {
                        let elapsed = time(op, dir, &setup, reduce, cfg)?.as_secs_f64();
                        records.push(BenchRecord {
                            op,
                            reduce,
                            direction: dir,
                            layout,
                            avg_degree: degree,
                            n_nodes: cfg.nodes,
                            repeats: cfg.repeats,
                            elapsed_s: elapsed,
                            per_iter_us: elapsed * 1e6 / cfg.repeats as f64,
                        });
                    }
                }
            }
        }
    }
    sort_records(&mut records);
    Ok(records)
}

/// Orders by degree, op, reduce mode, direction, layout.
pub fn sort_records(records: &mut [BenchRecord]) {
    records.sort_by(|a, b| {
        a.avg_degree
            .total_cmp(&b.avg_degree)
            .then(a.op.cmp(&b.op))
            .then(a.reduce.as_str().cmp(b.reduce.as_str()))
            .then(a.direction.cmp(&b.direction))
            .then(a.layout.cmp(&b.layout))
    });
}

pub fn write_records<W: std::io::Write>(out: W, records: &[BenchRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_records_to(path: &Path, records: &[BenchRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_records(std::io::BufWriter::new(file), records)
}

/// `per_iter_us` of the matching record, if present.
pub fn lookup(records: &[BenchRecord], op: Op, reduce: ReduceMode, dir: Direction, layout: Layout, degree: f64) -> Option<f64> {
    records
        .iter()
        .find(|r| r.op == op && r.reduce == reduce && r.direction == dir && r.layout == layout && r.avg_degree == degree)
        .map(|r| r.per_iter_us)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BenchConfig {
        BenchConfig {
            nodes: 300,
            degrees: vec![8.0, 2.0],
            repeats: 2,
            features: 4,
            modes: ReduceMode::ALL.to_vec(),
            warmup: 1,
            ..BenchConfig::default()
        }
    }

    #[test]
    fn record_shape_and_order() {
        let recs = bench_scatter_vs_spmm(&small()).unwrap();
        // per degree: gs 3 modes + spmm 2 modes, 2 directions, 2 layouts
        assert_eq!(recs.len(), 2 * 5 * 2 * 2);
        assert!(recs.iter().all(|r| r.elapsed_s > 0.0 && r.repeats == 2));
        for r in &recs {
            assert!((r.per_iter_us - r.elapsed_s * 1e6 / 2.0).abs() < 1e-9);
        }
        assert_eq!(recs[0].avg_degree, 2.0);
        assert_eq!((recs[0].op, recs[0].reduce), (Op::Gs, ReduceMode::Add));
        assert_eq!((recs[0].direction, recs[0].layout), (Direction::Forward, Layout::Coalesced));
        assert!(!recs.iter().any(|r| r.op == Op::Spmm && r.reduce == ReduceMode::Max));
        let mut sorted = recs.clone();
        sort_records(&mut sorted);
        assert_eq!(sorted, recs);
    }

    #[test]
    fn precheck_passes_on_every_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = erdos_renyi_with_features(200, 6.0, true, 3, &mut rng).unwrap();
        for graph in [g.clone(), shuffled(&g, 1)] {
            for reduce in ReduceMode::ALL {
                for prebuilt in [true, false] {
                    let csr = (prebuilt && reduce != ReduceMode::Max).then(|| Arc::new(build_csr(&graph, reduce).unwrap()));
                    let s = Setup { graph: graph.clone(), csr };
                    assert!(precheck(&s, reduce, ExecutionMode::Parallel).unwrap(), "{reduce}");
                }
            }
        }
    }

    #[test]
    fn shuffle_keeps_the_edge_multiset() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = erdos_renyi_with_features(100, 4.0, true, 2, &mut rng).unwrap();
        let s = shuffled(&g, 9);
        assert!(!s.is_coalesced());
        let mut a: Vec<_> = s.edges().collect();
        a.sort_unstable();
        assert_eq!(a, g.edges().collect::<Vec<_>>());
    }

    #[test]
    fn csv_has_the_documented_header() {
        let recs = bench_scatter_vs_spmm(&BenchConfig {
            modes: vec![ReduceMode::Add],
            degrees: vec![2.0],
            directions: vec![Direction::Forward],
            layouts: vec![Layout::NonCoalesced],
            ..small()
        })
        .unwrap();
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "op,reduce,direction,layout,avg_degree,n_nodes,repeats,elapsed_s,per_iter_us"
        );
        assert!(lines.next().unwrap().starts_with("gs,add,forward,non_coalesced,2.0,300,2,"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn rejects_empty_sweeps() {
        assert!(bench_scatter_vs_spmm(&BenchConfig { degrees: vec![], ..small() }).is_err());
        assert!(bench_scatter_vs_spmm(&BenchConfig { repeats: 0, ..small() }).is_err());
        let d = lookup(&[], Op::Gs, ReduceMode::Add, Direction::Forward, Layout::Coalesced, 2.0);
        assert!(d.is_none());
    }
}
