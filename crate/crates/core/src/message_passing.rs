//! The gather → message → scatter → update pipeline shared by every layer.
//!
//! A layer describes one propagation step by implementing
//! [`MessagePassing`]; [`propagate`] then moves node features into edge
//! space along the edge index, asks the layer for per-edge messages, reduces
//! them into each target's row, and hands the result to the layer's update.
//! Targets without in-edges receive the empty-segment value 0.

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::graph::EdgeIndex;
use crate::scatter::{gather, scatter, segment_softmax, ReduceMode};

/// How messages arriving at one target are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Aggregation {
    Reduce(ReduceMode),
    /// `Σ_j α_ji m_ji` with `α` the softmax of the message logits over the
    /// target's in-edges.
    SoftmaxWeightedAdd,
}

/// Edge-space view handed to [`MessagePassing::message`]. Row `k` belongs
/// to edge `k`.
pub struct EdgeInputs<'a, 't> {
    /// Target features `x_i`; `None` when the layer opted out.
    pub x_i: Option<Var<'t>>,
    /// Source features `x_j`.
    pub x_j: Var<'t>,
    pub edge_attr: Option<Var<'t>>,
    pub edge_index: &'a EdgeIndex,
}

/// Per-edge output of a message function.
pub struct Message<'t> {
    pub value: Var<'t>,
    /// `E×1` attention logits; required by [`Aggregation::SoftmaxWeightedAdd`].
    pub logits: Option<Var<'t>>,
}

impl<'t> From<Var<'t>> for Message<'t> {
    fn from(value: Var<'t>) -> Self {
        Message {
            value,
            logits: None,
        }
    }
}

/// One propagation step `x_i' = γ(x_i, □_j φ(x_i, x_j, e_ji))`.
pub trait MessagePassing<'t> {
    fn aggregation(&self) -> Aggregation;

    /// Whether `x_i` is gathered for the message function.
    fn gathers_target(&self) -> bool {
        true
    }

    fn message(&mut self, edges: &EdgeInputs<'_, 't>) -> Result<Message<'t>>;

    /// Applied to the normalised attention coefficients before weighting.
    fn attention(&mut self, alpha: Var<'t>) -> Result<Var<'t>> {
        Ok(alpha)
    }

    fn update(&mut self, x: Var<'t>, aggregated: Var<'t>) -> Result<Var<'t>> {
        let _ = x;
        Ok(aggregated)
    }
}

pub fn propagate<'t, L: MessagePassing<'t> + ?Sized>(
    layer: &mut L,
    edge_index: &EdgeIndex,
    x: Var<'t>,
    edge_attr: Option<Var<'t>>,
) -> Result<Var<'t>> {
    if x.rows() != edge_index.num_nodes() {
        return Err(Error::dim(
            "propagate",
            format!("{} feature rows for {} nodes", x.rows(), edge_index.num_nodes()),
        ));
    }
    if let Some(e) = edge_attr {
        if e.rows() != edge_index.len() {
            return Err(Error::dim(
                "propagate",
                format!("{} attribute rows for {} edges", e.rows(), edge_index.len()),
            ));
        }
    }
    let x_j = gather(x, edge_index.src())?;
    let x_i = if layer.gathers_target() {
        Some(gather(x, edge_index.dst())?)
    } else {
        None
    };
    let msg = layer.message(&EdgeInputs {
        x_i,
        x_j,
        edge_attr,
        edge_index,
    })?;
    if msg.value.rows() != edge_index.len() {
        return Err(Error::dim(
            "propagate",
            format!("{} message rows for {} edges", msg.value.rows(), edge_index.len()),
        ));
    }
    let aggregated = match layer.aggregation() {
        Aggregation::Reduce(mode) => scatter(msg.value, edge_index.dst(), mode)?,
        Aggregation::SoftmaxWeightedAdd => {
            let logits = msg
                .logits
                .ok_or_else(|| Error::invalid("softmax aggregation needs message logits"))?;
            if logits.shape() != (edge_index.len(), 1) {
                return Err(Error::dim(
                    "propagate",
                    format!("logits {:?}, expected ({}, 1)", logits.shape(), edge_index.len()),
                ));
            }
            let alpha = segment_softmax(logits, edge_index.dst())?;
            let alpha = layer.attention(alpha)?;
            scatter(msg.value.mul(alpha)?, edge_index.dst(), ReduceMode::Add)?
        }
    };
    layer.update(x, aggregated)
}

/// Plain neighbourhood reduction: message `x_j`, no update.
pub struct NeighborReduce(pub ReduceMode);

impl<'t> MessagePassing<'t> for NeighborReduce {
    fn aggregation(&self) -> Aggregation {
        Aggregation::Reduce(self.0)
    }

    fn gathers_target(&self) -> bool {
        false
    }

    fn message(&mut self, edges: &EdgeInputs<'_, 't>) -> Result<Message<'t>> {
        Ok(edges.x_j.into())
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::autodiff::Tape;
    use crate::graph::{erdos_renyi, Graph};
    use crate::sparse::{spmm, to_csr};
    use crate::tensor::Tensor;
    use crate::testing::{assert_gradients, max_rel_diff, uniform};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Message `(x_i + x_j) / 2 + x_j`; exercises both endpoints.
    struct Mixed(ReduceMode);

    impl<'t> MessagePassing<'t> for Mixed {
        fn aggregation(&self) -> Aggregation {
            Aggregation::Reduce(self.0)
        }

        fn message(&mut self, e: &EdgeInputs<'_, 't>) -> Result<Message<'t>> {
            Ok(e.x_i.unwrap().add(e.x_j)?.scale(0.5)?.add(e.x_j)?.into())
        }

        fn update(&mut self, x: Var<'t>, aggr: Var<'t>) -> Result<Var<'t>> {
            x.scale(0.25)?.add(aggr)
        }
    }

    fn run(g: &Graph, layer: &mut dyn for<'t> MessagePassing<'t>) -> Tensor {
        let tape = Tape::new();
        let x = tape.constant(Arc::clone(g.x()));
        let out = propagate(layer, g.edge_index(), x, None).unwrap();
        (*out.value()).clone()
    }

    #[test]
    fn neighbor_sum_equals_spmm() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = erdos_renyi(80, 6.0, true, &mut rng).unwrap();
        let gs = run(&g, &mut NeighborReduce(ReduceMode::Add));
        let tape = Tape::new();
        let a = Arc::new(to_csr(&g, None).unwrap());
        let sp = spmm(&a, tape.constant(Arc::clone(g.x()))).unwrap();
        assert!(max_rel_diff(&gs, &sp.value()) < 1e-10);
    }

    #[test]
    fn empty_and_self_loop_cases() {
        let x = Tensor::from_rows(&[[1.0, -2.0], [3.0, 4.0]]);
        let empty = Graph::new(x.clone(), vec![], vec![]).unwrap();
        assert_eq!(run(&empty, &mut NeighborReduce(ReduceMode::Add)), Tensor::zeros(2, 2));
        let looped = Graph::new(x.clone(), vec![0, 1], vec![0, 1]).unwrap();
        assert_eq!(run(&looped, &mut NeighborReduce(ReduceMode::Add)), x);
    }

    #[test]
    fn edge_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = erdos_renyi(60, 5.0, false, &mut rng).unwrap();
        let mut perm: Vec<usize> = (0..g.num_edges()).collect();
        perm.shuffle(&mut rng);
        let shuffled = g.select_edges(&perm);
        for mode in ReduceMode::ALL {
            let a = run(&g, &mut Mixed(mode));
            let b = run(&shuffled, &mut Mixed(mode));
            match mode {
                ReduceMode::Max => assert_eq!(a, b),
                _ => assert!(max_rel_diff(&a, &b) < 1e-10),
            }
        }
    }

    #[test]
    fn node_relabeling_is_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = erdos_renyi(40, 4.0, true, &mut rng).unwrap();
        let mut perm: Vec<usize> = (0..40).collect();
        perm.shuffle(&mut rng);
        let pg = g.permute_nodes(&perm).unwrap();
        for mode in ReduceMode::ALL {
            let out = run(&g, &mut Mixed(mode));
            let pout = run(&pg, &mut Mixed(mode));
            for (i, &pi) in perm.iter().enumerate() {
                for (a, b) in out.row(i).iter().zip(pout.row(pi)) {
                    assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn propagate_is_differentiable() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = erdos_renyi(20, 3.0, true, &mut rng).unwrap();
        let x = uniform(20, 3, -1.0, 1.0, &mut rng);
        let w = uniform(20, 3, -1.0, 1.0, &mut rng);
        for mode in [ReduceMode::Add, ReduceMode::Mean] {
            let ei = g.edge_index().clone();
            let w = w.clone();
            assert_gradients(std::slice::from_ref(&x), move |tape, v| {
                let out = propagate(&mut Mixed(mode), &ei, v[0], None)?;
                out.mul(tape.constant(w.clone()))?.sum()
            });
        }
    }

    #[test]
    fn shape_errors_surface() {
        let g = Graph::new(Tensor::zeros(3, 1), vec![0], vec![1]).unwrap();
        let tape = Tape::new();
        let x = tape.constant(Tensor::zeros(4, 1));
        assert!(propagate(&mut NeighborReduce(ReduceMode::Add), g.edge_index(), x, None).is_err());
    }
}
