//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Operations record themselves on a [`Tape`] as they execute; the tape is
//! therefore built dynamically and may differ on every forward pass.
//! [`Tape::backward`] walks the recorded nodes in reverse execution order and
//! accumulates gradients into every leaf that asked for one.
//!
//! ```
//! use gsnn_core::{Tape, Tensor};
//!
//! let tape = Tape::new();
//! let x = tape.leaf(Tensor::from_rows(&[[3.0]]).with_requires_grad(true));
//! let y = x.mul(x).unwrap().sum().unwrap();
//! tape.backward(y).unwrap();
//! assert_eq!(tape.grad(x).unwrap().data(), &[6.0]);
//! ```

mod ops;

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

pub use ops::{dropout_mask, elementwise, Elementwise};

use crate::error::{Error, Result};
use crate::scatter::ExecutionMode;
use crate::tensor::Tensor;

/// Everything a recorded operation sees when its gradient is requested.
pub struct BackwardContext<'a> {
    /// Gradient of the loss with respect to this node's output.
    pub grad: &'a Tensor,
    pub output: &'a Tensor,
    pub inputs: Vec<&'a Tensor>,
    /// `needs_grad[k]` is false when input `k` cannot reach a trainable leaf;
    /// operations may skip that input's gradient entirely.
    pub needs_grad: Vec<bool>,
    pub mode: ExecutionMode,
}

/// Backward rule of one recorded operation.
///
/// Returns one entry per input. `None` means "no contribution".
pub trait BackwardOp {
    fn backward(&self, ctx: &BackwardContext<'_>) -> Result<Vec<Option<Tensor>>>;
}

struct Node {
    value: Arc<Tensor>,
    inputs: Vec<usize>,
    op: Option<Box<dyn BackwardOp>>,
    requires_grad: bool,
    name: &'static str,
}

/// Record of executed differentiable operations.
///
/// A tape is single-threaded. Independent forward passes use independent
/// tapes and may run on separate threads.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    leaf_grads: RefCell<Vec<Option<Vec<f64>>>>,
    mode: ExecutionMode,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nodes = self.nodes.borrow();
        f.debug_struct("Tape")
            .field("nodes", &nodes.iter().map(|n| n.name).collect::<Vec<_>>())
            .field("mode", &self.mode)
            .finish()
    }
}

impl Tape {
    /// New tape using the process-wide scatter execution mode.
    pub fn new() -> Self {
        Self::with_mode(crate::scatter::execution_mode())
    }

    pub fn with_mode(mode: ExecutionMode) -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            leaf_grads: RefCell::new(Vec::new()),
            mode,
        }
    }

    pub fn mode(&self) -> ExecutionMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers a leaf. It receives a gradient iff `t.requires_grad()`.
    pub fn leaf(&self, t: Tensor) -> Var<'_> {
        let requires_grad = t.requires_grad();
        self.push_leaf(Arc::new(t), requires_grad, "leaf")
    }

    /// Registers a copy of a trainable parameter.
    pub fn param(&self, t: &Tensor) -> Var<'_> {
        let mut copy = t.clone();
        copy.zero_grad();
        self.push_leaf(Arc::new(copy), true, "param")
    }

    /// Registers a shared, non-differentiable input without copying it.
    pub fn constant(&self, t: impl Into<Arc<Tensor>>) -> Var<'_> {
        self.push_leaf(t.into(), false, "constant")
    }

    fn push_leaf(&self, value: Arc<Tensor>, requires_grad: bool, name: &'static str) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            inputs: Vec::new(),
            op: None,
            requires_grad,
            name,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Appends the result of an operation. Rejects non-finite outputs.
    pub fn record<'t>(
        &'t self,
        name: &'static str,
        value: Tensor,
        inputs: &[Var<'t>],
        op: impl BackwardOp + 'static,
    ) -> Result<Var<'t>> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let mut nodes = self.nodes.borrow_mut();
        let ids: Vec<usize> = inputs
            .iter()
            .map(|v| {
                debug_assert!(std::ptr::eq(v.tape, self), "var from another tape");
                v.id
            })
            .collect();
        let requires_grad = ids.iter().any(|&i| nodes[i].requires_grad);
        nodes.push(Node {
            value: Arc::new(value),
            inputs: ids,
            op: requires_grad.then(|| Box::new(op) as Box<dyn BackwardOp>),
            requires_grad,
            name,
        });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    pub fn value(&self, v: Var<'_>) -> Arc<Tensor> {
        Arc::clone(&self.nodes.borrow()[v.id].value)
    }

    pub fn requires_grad(&self, v: Var<'_>) -> bool {
        self.nodes.borrow()[v.id].requires_grad
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var<'_>) -> Option<Tensor> {
        let grads = self.leaf_grads.borrow();
        let g = grads.get(v.id)?.as_ref()?;
        let (r, c) = self.nodes.borrow()[v.id].value.shape();
        Some(Tensor::new(r, c, g.clone()).expect("grad shape"))
    }

    pub fn zero_grad(&self) {
        self.leaf_grads.borrow_mut().iter_mut().for_each(|g| *g = None);
    }

    /// Propagates d(loss)/d(leaf) into every trainable leaf. Repeated calls
    /// add to the existing leaf gradients.
    pub fn backward(&self, loss: Var<'_>) -> Result<()> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.shape() != (1, 1) {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got {}x{}",
                root.value.rows(),
                root.value.cols()
            )));
        }
        if !root.requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.id).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::scalar(1.0));
        let mut leaf_grads = self.leaf_grads.borrow_mut();
        if leaf_grads.len() < nodes.len() {
            leaf_grads.resize(nodes.len(), None);
        }

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            let Some(op) = &node.op else {
                if node.requires_grad {
                    match &mut leaf_grads[id] {
                        Some(acc) => acc.iter_mut().zip(g.data()).for_each(|(a, b)| *a += b),
                        slot => *slot = Some(g.into_data()),
                    }
                }
                continue;
            };
            let ctx = BackwardContext {
                grad: &g,
                output: &node.value,
                inputs: node.inputs.iter().map(|&i| &*nodes[i].value).collect(),
                needs_grad: node.inputs.iter().map(|&i| nodes[i].requires_grad).collect(),
                mode: self.mode,
            };
            let input_grads = op.backward(&ctx)?;
            for ((&input, need), ig) in node.inputs.iter().zip(&ctx.needs_grad).zip(input_grads) {
                let Some(ig) = ig else { continue };
                if !need {
                    continue;
                }
                if ig.shape() != nodes[input].value.shape() {
                    return Err(Error::InvalidState(format!(
                        "{} produced a {:?} gradient for a {:?} input",
                        node.name,
                        ig.shape(),
                        nodes[input].value.shape()
                    )));
                }
                match &mut grads[input] {
                    Some(acc) => acc
                        .data_mut()
                        .iter_mut()
                        .zip(ig.data())
                        .for_each(|(a, b)| *a += b),
                    slot => *slot = Some(ig),
                }
            }
        }
        Ok(())
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Arc<Tensor> {
        self.tape.value(*self)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    pub fn rows(&self) -> usize {
        self.shape().0
    }

    pub fn cols(&self) -> usize {
        self.shape().1
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad(*self)
    }

    pub fn backward(&self) -> Result<()> {
        self.tape.backward(*self)
    }

    pub fn grad(&self) -> Option<Tensor> {
        self.tape.grad(*self)
    }
}
