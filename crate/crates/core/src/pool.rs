//! Graph-level readout: one row per graph, reduced over the nodes the
//! assignment vector maps to it.

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scatter::{scatter, IndexVector, ReduceMode};

/// Scatters node rows into `batch.dim_size()` graph slots.
pub fn global_pool<'t>(x: Var<'t>, batch: &IndexVector, reduce: ReduceMode) -> Result<Var<'t>> {
    scatter(x, batch, reduce)
}

/// Assignment vector of `g` as an index over its graphs; a graph without one
/// is a single graph.
pub fn batch_index(g: &Graph) -> Result<IndexVector> {
    match g.batch() {
        Some(b) => {
            let graphs = b.last().map_or(0, |&l| l + 1);
            IndexVector::new(b.to_vec(), graphs.max(1))
        }
        None if g.num_nodes() > 0 => IndexVector::new(vec![0; g.num_nodes()], 1),
        None => Err(Error::invalid("pooling an empty graph")),
    }
}
