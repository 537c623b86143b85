use std::sync::Arc;

use super::{EdgeIndex, Graph};
use crate::error::{Error, Result};
use crate::scatter::{scatter_reduce, ExecutionMode, ReduceMode};
use crate::tensor::Tensor;

/// Which endpoint an edge is counted at.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Edges counted at their target.
    In,
    /// Edges counted at their source.
    Out,
}

impl Graph {
    /// Sorts edges by `(src, dst)` and merges duplicates, summing their
    /// attributes. Idempotent.
    pub fn coalesce(&self) -> Graph {
        if self.is_coalesced() {
            return self.clone();
        }
        let src = self.edge_index.src().values();
        let dst = self.edge_index.dst().values();
        let mut order: Vec<usize> = (0..src.len()).collect();
        order.sort_by_key(|&k| (src[k], dst[k]));

        let mut new_src = Vec::with_capacity(order.len());
        let mut new_dst = Vec::with_capacity(order.len());
        // groups[i] = original edges merged into output edge i
        let mut groups: Vec<Vec<usize>> = Vec::with_capacity(order.len());
        for &k in &order {
            let key = (src[k], dst[k]);
            if new_src.last() == Some(&key.0) && new_dst.last() == Some(&key.1) {
                groups.last_mut().expect("group").push(k);
            } else {
                new_src.push(key.0);
                new_dst.push(key.1);
                groups.push(vec![k]);
            }
        }

        let attr = self.edge_attr.as_ref().map(|a| {
            let cols = a.cols();
            let mut out = Tensor::zeros(groups.len(), cols);
            for (i, members) in groups.iter().enumerate() {
                let row = &mut out.data_mut()[i * cols..(i + 1) * cols];
                for &k in members {
                    row.iter_mut().zip(a.row(k)).for_each(|(o, v)| *o += v);
                }
            }
            Arc::new(out)
        });

        let edge_index =
            EdgeIndex::new(new_src, new_dst, self.num_nodes()).expect("coalesce keeps bounds");
        let mut g = self.clone();
        g.edge_index = edge_index;
        g.edge_attr = attr;
        g.mark_coalesced(true)
    }

    /// Appends `(i, i)` for every node lacking one. New attribute rows are
    /// zero.
    pub fn add_self_loops(&self) -> Graph {
        let n = self.num_nodes();
        let mut has_loop = vec![false; n];
        for (s, d) in self.edges() {
            if s == d {
                has_loop[s] = true;
            }
        }
        let missing: Vec<usize> = (0..n).filter(|&i| !has_loop[i]).collect();
        if missing.is_empty() {
            return self.clone();
        }
        let mut src = self.edge_index.src().values().to_vec();
        let mut dst = self.edge_index.dst().values().to_vec();
        src.extend_from_slice(&missing);
        dst.extend_from_slice(&missing);

        let attr = self.edge_attr.as_ref().map(|a| {
            let mut data = a.data().to_vec();
            data.resize(data.len() + missing.len() * a.cols(), 0.0);
            Arc::new(Tensor::new(src.len(), a.cols(), data).expect("attr shape"))
        });

        let mut g = self.clone();
        g.edge_index = EdgeIndex::new(src, dst, n).expect("self loops in bounds");
        g.edge_attr = attr;
        g.mark_coalesced(false)
    }

    /// Drops every `(i, i)` edge together with its attribute row.
    pub fn remove_self_loops(&self) -> Graph {
        let keep: Vec<usize> = self
            .edges()
            .enumerate()
            .filter(|(_, (s, d))| s != d)
            .map(|(k, _)| k)
            .collect();
        if keep.len() == self.num_edges() {
            return self.clone();
        }
        self.select_edges(&keep)
    }

    /// Adds the reverse of every edge, then coalesces.
    pub fn to_undirected(&self) -> Graph {
        let mut src = self.edge_index.src().values().to_vec();
        let mut dst = self.edge_index.dst().values().to_vec();
        src.extend_from_slice(self.edge_index.dst().values());
        dst.extend_from_slice(self.edge_index.src().values());
        let mut g = self.clone();
        g.edge_index = EdgeIndex::new(src, dst, self.num_nodes()).expect("reverse in bounds");
        g.edge_attr = self.edge_attr.as_ref().map(|a| Arc::new(Tensor::vstack(&[a, a]).expect("same cols")));
        g.coalesced = false;
        g.coalesce()
    }

    /// Keeps the listed edges in the given order.
    pub fn select_edges(&self, keep: &[usize]) -> Graph {
        let src = self.edge_index.src().values();
        let dst = self.edge_index.dst().values();
        let new_src = keep.iter().map(|&k| src[k]).collect();
        let new_dst = keep.iter().map(|&k| dst[k]).collect();
        let mut g = self.clone();
        g.edge_index = EdgeIndex::new(new_src, new_dst, self.num_nodes()).expect("subset in bounds");
        g.edge_attr = self
            .edge_attr
            .as_ref()
            .map(|a| Arc::new(a.select_rows(keep)));
        // A subsequence of a sorted duplicate-free list stays sorted only if
        // the order is preserved.
        let ordered = keep.windows(2).all(|w| w[0] < w[1]);
        let flag = self.coalesced && ordered;
        g.mark_coalesced(flag)
    }

    /// Relabels node `i` as `perm[i]`, moving feature rows and labels with it.
    pub fn permute_nodes(&self, perm: &[usize]) -> Result<Graph> {
        let n = self.num_nodes();
        if perm.len() != n {
            return Err(Error::dim("permute_nodes", format!("{} entries for {n} nodes", perm.len())));
        }
        let mut inverse = vec![usize::MAX; n];
        for (i, &p) in perm.iter().enumerate() {
            if p >= n || inverse[p] != usize::MAX {
                return Err(Error::invalid("permute_nodes needs a permutation"));
            }
            inverse[p] = i;
        }
        let x = self.x.select_rows(&inverse);
        let src = self.edge_index.src().values().iter().map(|&s| perm[s]).collect();
        let dst = self.edge_index.dst().values().iter().map(|&d| perm[d]).collect();
        let mut g = self.clone();
        g.x = Arc::new(x);
        g.edge_index = EdgeIndex::new(src, dst, n)?;
        if let Some(super::Labels::Node(y)) = &self.y {
            let y: Vec<usize> = inverse.iter().map(|&i| y[i]).collect();
            g.y = Some(super::Labels::Node(y.into()));
        }
        if let Some(m) = &self.masks {
            let map = |v: &Vec<usize>| v.iter().map(|&i| perm[i]).collect();
            g.masks = Some(super::Masks {
                train: map(&m.train),
                val: map(&m.val),
                test: map(&m.test),
            });
        }
        g.batch = None;
        Ok(g.mark_coalesced(false))
    }

    /// Edge counts per node via a scatter-add of ones.
    pub fn degree(&self, direction: Direction) -> Tensor {
        let index = match direction {
            Direction::In => self.edge_index.dst(),
            Direction::Out => self.edge_index.src(),
        };
        let ones = Tensor::ones(index.len(), 1);
        scatter_reduce(&ones, index, ReduceMode::Add, ExecutionMode::Sequential)
            .expect("one column per edge")
            .out
    }

    /// Symmetric normalisation weights `1 / sqrt(deg(src) deg(dst))` with
    /// in-degrees. The graph must already contain self-loops so that no
    /// degree is zero.
    pub fn gcn_norm(&self) -> Result<Tensor> {
        let deg = self.degree(Direction::In).into_data();
        if let Some(i) = deg.iter().position(|&d| d == 0.0) {
            return Err(Error::InvalidState(format!(
                "gcn_norm: node {i} has no in-edges; add self-loops first"
            )));
        }
        let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
        let w: Vec<f64> = self.edges().map(|(s, d)| inv_sqrt[s] * inv_sqrt[d]).collect();
        Tensor::new(w.len(), 1, w)
    }
}
