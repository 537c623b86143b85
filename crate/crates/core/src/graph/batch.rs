use std::ops::{Deref, Range};
use std::sync::Arc;

use super::{EdgeIndex, Graph, Labels, Masks};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Disjoint union of several graphs. Node `i` of graph `b` becomes node
/// `node_offsets[b] + i`; the adjacency is block diagonal so no message
/// crosses graphs.
#[derive(Clone, Debug)]
pub struct BatchedGraph {
    graph: Graph,
    node_offsets: Vec<usize>,
}

impl Deref for BatchedGraph {
    type Target = Graph;

    fn deref(&self) -> &Graph {
        &self.graph
    }
}

impl BatchedGraph {
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn num_graphs(&self) -> usize {
        self.node_offsets.len() - 1
    }

    /// `num_graphs() + 1` prefix sums of node counts.
    pub fn node_offsets(&self) -> &[usize] {
        &self.node_offsets
    }

    pub fn node_range(&self, b: usize) -> Range<usize> {
        self.node_offsets[b]..self.node_offsets[b + 1]
    }

    /// Rows of a node-space tensor belonging to graph `b`.
    pub fn block(&self, t: &Tensor, b: usize) -> Tensor {
        let idx: Vec<usize> = self.node_range(b).collect();
        t.select_rows(&idx)
    }
}

/// Concatenates features, offsets edge indices and builds the assignment
/// vector. Labels must be of one kind across all inputs (or absent from
/// all); masks are kept only when every input has them.
pub fn make_batch(graphs: &[Graph]) -> Result<BatchedGraph> {
    let first = graphs
        .first()
        .ok_or_else(|| Error::invalid("make_batch needs at least one graph"))?;
    let cols = first.num_features();
    let attr_cols = first.edge_attr().map(|a| a.cols());
    for g in graphs {
        if g.num_features() != cols {
            return Err(Error::dim(
                "make_batch",
                format!("feature width {} vs {cols}", g.num_features()),
            ));
        }
        if g.edge_attr().map(|a| a.cols()) != attr_cols {
            return Err(Error::dim("make_batch", "edge attributes differ across graphs"));
        }
    }

    let mut node_offsets = Vec::with_capacity(graphs.len() + 1);
    node_offsets.push(0);
    for g in graphs {
        node_offsets.push(node_offsets.last().unwrap() + g.num_nodes());
    }
    let n = *node_offsets.last().unwrap();

    let parts: Vec<&Tensor> = graphs.iter().map(|g| g.x().as_ref()).collect();
    let x = Tensor::vstack(&parts)?;

    let mut src = Vec::new();
    let mut dst = Vec::new();
    for (g, &off) in graphs.iter().zip(&node_offsets) {
        src.extend(g.edge_index().src().values().iter().map(|&s| s + off));
        dst.extend(g.edge_index().dst().values().iter().map(|&d| d + off));
    }
    let batch: Vec<usize> = graphs
        .iter()
        .enumerate()
        .flat_map(|(b, g)| std::iter::repeat_n(b, g.num_nodes()))
        .collect();

    let all_coalesced = graphs.iter().all(Graph::is_coalesced);
    let mut out = Graph::from_parts(Arc::new(x), EdgeIndex::new(src, dst, n)?);
    if attr_cols.is_some() {
        let attrs: Vec<&Tensor> = graphs.iter().map(|g| g.edge_attr().unwrap().as_ref()).collect();
        out = out.with_edge_attr(Tensor::vstack(&attrs)?)?;
    }
    if let Some(labels) = concat_labels(graphs)? {
        out = out.with_labels(labels)?;
    }
    if graphs.iter().all(|g| g.masks().is_some()) {
        let mut masks = Masks::default();
        for (g, &off) in graphs.iter().zip(&node_offsets) {
            let m = g.masks().unwrap();
            masks.train.extend(m.train.iter().map(|i| i + off));
            masks.val.extend(m.val.iter().map(|i| i + off));
            masks.test.extend(m.test.iter().map(|i| i + off));
        }
        out = out.with_masks(masks)?;
    }
    // Offsetting preserves (src, dst) order within and across blocks.
    let graph = out.with_batch(batch)?.mark_coalesced(all_coalesced);
    Ok(BatchedGraph {
        graph,
        node_offsets,
    })
}

fn concat_labels(graphs: &[Graph]) -> Result<Option<Labels>> {
    let kinds: Vec<Option<bool>> = graphs
        .iter()
        .map(|g| g.labels().map(|l| matches!(l, Labels::Node(_))))
        .collect();
    if kinds.iter().all(Option::is_none) {
        return Ok(None);
    }
    if kinds.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::invalid("make_batch: label kinds differ across graphs"));
    }
    let values: Vec<usize> = graphs
        .iter()
        .flat_map(|g| g.labels().unwrap().values().iter().copied())
        .collect();
    Ok(Some(if kinds[0] == Some(true) {
        Labels::Node(values.into())
    } else {
        Labels::Graph(values.into())
    }))
}
