//! Sparse message passing for graph neural networks, built on gather and
//! scatter.
//!
//! Node features live in node space (one row per node). A layer gathers them
//! into edge space along the COO edge index, computes per-edge messages,
//! and scatters the messages back into node space with a permutation
//! invariant reduction:
//!
//! ```text
//! x_i' = update(x_i, reduce_{j in N(i)} message(x_i, x_j, e_ji))
//! ```
//!
//! Module map:
//!
//! - [`tensor`], [`autodiff`]: dense 2-D values and a dynamic reverse-mode tape.
//! - [`scatter`]: gather, scatter add/mean/max, segment softmax.
//! - [`graph`]: COO graphs, transforms, block-diagonal batching, random graphs.
//! - [`sparse`]: CSR conversion and SpMM, the matrix-product baseline.
//! - [`message_passing`], [`layers`], [`pool`]: the layer abstraction, the
//!   GCN/SGC/GAT/GIN/APPNP operators and graph-level readout.
//! - [`data`], [`train`]: citation dataset ingestion, splits, Adam, training.
//! - [`study`], [`experiment`]: the GS-vs-SpMM timing study and the repeated
//!   node-classification runs behind the command line tool.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod init;
pub mod layers;
pub mod message_passing;
pub mod pool;
pub mod scatter;
pub mod sparse;
pub mod study;
pub mod tensor;
pub mod train;

#[cfg(any(test, feature = "testing"))]
pub mod testing;

pub use autodiff::{BackwardContext, BackwardOp, Tape, Var};
pub use error::{Error, Result};
pub use graph::{BatchedGraph, EdgeIndex, Graph};
pub use scatter::{
    execution_mode, gather, scatter, segment_softmax, set_execution_mode, ExecutionMode,
    IndexVector, ReduceMode,
};
pub use sparse::{spmm, to_csr, CsrMatrix};
pub use tensor::Tensor;
