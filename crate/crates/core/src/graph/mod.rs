//! Graph data model: node features plus a COO edge index.
//!
//! Edge `k` is the pair `(src[k], dst[k])`; messages flow from the source
//! node to the target node, and aggregation collects each target's
//! in-edges. Graph values are immutable: every transform returns a new graph
//! and shares any buffer it did not change.

mod batch;
mod random;
mod transform;

use std::sync::Arc;

pub use batch::{make_batch, BatchedGraph};
pub use random::{erdos_renyi, erdos_renyi_with_features, DEFAULT_FEATURES};
pub use transform::Direction;

use crate::error::{Error, Result};
use crate::scatter::IndexVector;
use crate::tensor::Tensor;

/// COO edge list over `num_nodes` nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeIndex {
    src: IndexVector,
    dst: IndexVector,
}

impl EdgeIndex {
    pub fn new(src: Vec<usize>, dst: Vec<usize>, num_nodes: usize) -> Result<Self> {
        if src.len() != dst.len() {
            return Err(Error::dim(
                "edge_index",
                format!("{} sources vs {} targets", src.len(), dst.len()),
            ));
        }
        Ok(Self {
            src: IndexVector::new(src, num_nodes)?,
            dst: IndexVector::new(dst, num_nodes)?,
        })
    }

    pub fn empty(num_nodes: usize) -> Self {
        Self::new(Vec::new(), Vec::new(), num_nodes).expect("empty edge index")
    }

    /// Source node of every edge, as a gather/scatter index.
    pub fn src(&self) -> &IndexVector {
        &self.src
    }

    /// Target node of every edge.
    pub fn dst(&self) -> &IndexVector {
        &self.dst
    }

    pub fn num_nodes(&self) -> usize {
        self.src.dim_size()
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.src
            .values()
            .iter()
            .copied()
            .zip(self.dst.values().iter().copied())
    }
}

/// Labels attached to a graph: one per node or one per graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Labels {
    Node(Arc<[usize]>),
    Graph(Arc<[usize]>),
}

impl Labels {
    pub fn values(&self) -> &[usize] {
        match self {
            Labels::Node(v) | Labels::Graph(v) => v,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.values().iter().max().map_or(0, |m| m + 1)
    }
}

/// Disjoint train/validation/test node subsets.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Masks {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Masks {
    fn validate(&self, num_nodes: usize) -> Result<()> {
        let mut seen = vec![false; num_nodes];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= num_nodes {
                return Err(Error::OutOfBounds {
                    op: "masks",
                    index: i,
                    size: num_nodes,
                });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!("node {i} appears in two masks")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Graph {
    x: Arc<Tensor>,
    edge_index: EdgeIndex,
    edge_attr: Option<Arc<Tensor>>,
    y: Option<Labels>,
    masks: Option<Masks>,
    batch: Option<Arc<[usize]>>,
    coalesced: bool,
}

impl Graph {
    /// Graph over `x.rows()` nodes with edges `(src[k], dst[k])`.
    pub fn new(x: impl Into<Arc<Tensor>>, src: Vec<usize>, dst: Vec<usize>) -> Result<Self> {
        let x = x.into();
        let edge_index = EdgeIndex::new(src, dst, x.rows())?;
        Ok(Self::from_parts(x, edge_index))
    }

    pub fn from_parts(x: Arc<Tensor>, edge_index: EdgeIndex) -> Self {
        assert_eq!(x.rows(), edge_index.num_nodes(), "feature rows vs node count");
        Self {
            x,
            edge_index,
            edge_attr: None,
            y: None,
            masks: None,
            batch: None,
            coalesced: false,
        }
    }

    pub fn with_edge_attr(mut self, attr: impl Into<Arc<Tensor>>) -> Result<Self> {
        let attr = attr.into();
        if attr.rows() != self.num_edges() {
            return Err(Error::dim(
                "edge_attr",
                format!("{} rows for {} edges", attr.rows(), self.num_edges()),
            ));
        }
        self.edge_attr = Some(attr);
        Ok(self)
    }

    pub fn with_labels(mut self, y: Labels) -> Result<Self> {
        if let Labels::Node(v) = &y {
            if v.len() != self.num_nodes() {
                return Err(Error::dim(
                    "labels",
                    format!("{} labels for {} nodes", v.len(), self.num_nodes()),
                ));
            }
        }
        self.y = Some(y);
        Ok(self)
    }

    pub fn with_masks(mut self, masks: Masks) -> Result<Self> {
        masks.validate(self.num_nodes())?;
        self.masks = Some(masks);
        Ok(self)
    }

    /// Attaches an assignment vector; it must start at 0 and never decrease
    /// or skip a graph id.
    pub fn with_batch(mut self, batch: Vec<usize>) -> Result<Self> {
        if batch.len() != self.num_nodes() {
            return Err(Error::dim(
                "batch",
                format!("{} entries for {} nodes", batch.len(), self.num_nodes()),
            ));
        }
        if batch.first().is_some_and(|&b| b != 0)
            || batch.windows(2).any(|w| w[1] < w[0] || w[1] > w[0] + 1)
        {
            return Err(Error::invalid("batch vector must be 0-based and non-decreasing"));
        }
        self.batch = Some(batch.into());
        Ok(self)
    }

    /// Same structure with new node features of equal row count.
    pub fn with_features(&self, x: impl Into<Arc<Tensor>>) -> Result<Self> {
        let x = x.into();
        if x.rows() != self.num_nodes() {
            return Err(Error::dim(
                "features",
                format!("{} rows for {} nodes", x.rows(), self.num_nodes()),
            ));
        }
        let mut g = self.clone();
        g.x = x;
        Ok(g)
    }

    pub(crate) fn mark_coalesced(mut self, flag: bool) -> Self {
        self.coalesced = flag;
        self
    }

    pub fn x(&self) -> &Arc<Tensor> {
        &self.x
    }

    pub fn edge_index(&self) -> &EdgeIndex {
        &self.edge_index
    }

    pub fn edge_attr(&self) -> Option<&Arc<Tensor>> {
        self.edge_attr.as_ref()
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.y.as_ref()
    }

    /// Per-node labels, if present.
    pub fn node_labels(&self) -> Option<&[usize]> {
        match &self.y {
            Some(Labels::Node(v)) => Some(v),
            _ => None,
        }
    }

    pub fn masks(&self) -> Option<&Masks> {
        self.masks.as_ref()
    }

    pub fn batch(&self) -> Option<&[usize]> {
        self.batch.as_deref()
    }

    pub fn is_coalesced(&self) -> bool {
        self.coalesced
    }

    pub fn num_nodes(&self) -> usize {
        self.x.rows()
    }

    pub fn num_edges(&self) -> usize {
        self.edge_index.len()
    }

    pub fn num_features(&self) -> usize {
        self.x.cols()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edge_index.iter()
    }

    /// True when every edge `(u, v)` has a matching `(v, u)` with the same
    /// multiplicity.
    pub fn is_undirected(&self) -> bool {
        let mut fwd: Vec<(usize, usize)> = self.edges().collect();
        let mut rev: Vec<(usize, usize)> = self.edges().map(|(a, b)| (b, a)).collect();
        fwd.sort_unstable();
        rev.sort_unstable();
        fwd == rev
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_validates_indices() {
        let x = Tensor::zeros(3, 1);
        assert!(Graph::new(x.clone(), vec![0, 3], vec![1, 1]).is_err());
        assert!(Graph::new(x.clone(), vec![0], vec![1, 2]).is_err());
        let g = Graph::new(x, vec![0, 1], vec![1, 2]).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert!(g.clone().with_edge_attr(Tensor::zeros(3, 2)).is_err());
        assert!(g.clone().with_edge_attr(Tensor::zeros(2, 2)).is_ok());
    }

    #[test]
    fn batch_vector_rules() {
        let g = Graph::new(Tensor::zeros(4, 1), vec![], vec![]).unwrap();
        assert!(g.clone().with_batch(vec![0, 0, 1, 1]).is_ok());
        assert!(g.clone().with_batch(vec![1, 1, 1, 1]).is_err());
        assert!(g.clone().with_batch(vec![0, 1, 0, 1]).is_err());
        assert!(g.with_batch(vec![0, 0, 1]).is_err());
    }

    #[test]
    fn masks_must_be_disjoint() {
        let g = Graph::new(Tensor::zeros(4, 1), vec![], vec![]).unwrap();
        let ok = Masks {
            train: vec![0],
            val: vec![1],
            test: vec![2, 3],
        };
        assert!(g.clone().with_masks(ok).is_ok());
        let clash = Masks {
            train: vec![0],
            val: vec![0],
            test: vec![],
        };
        assert!(g.with_masks(clash).is_err());
    }
}
