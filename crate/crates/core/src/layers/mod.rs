//! Neighbourhood-aggregation layers built on [`propagate`].
//!
//! Parameters live in a [`LayerParams`] store owned by the caller. A forward
//! pass binds the store to a tape with [`LayerParams::bind`] and layers read
//! their weights from the resulting [`BoundParams`]; after `backward` the
//! gradients are copied back with [`LayerParams::accumulate_grads`].

mod appnp;
mod gat;
mod gcn;
mod gin;
mod sgc;

use std::sync::Arc;

use rand::{Rng, RngCore};

pub use appnp::{appnp_propagate, Appnp};
pub use gat::{Gat, GatConfig};
pub use gcn::Gcn;
pub use gin::{gin_aggregate, Gin, GinEps};
pub use sgc::Sgc;

use crate::autodiff::{dropout_mask, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{EdgeIndex, Graph};
use crate::init::glorot_init;
use crate::message_passing::{propagate, Aggregation, EdgeInputs, Message, MessagePassing};
use crate::scatter::ReduceMode;
use crate::sparse::CsrMatrix;
use crate::tensor::Tensor;

/// Handle to one tensor in a [`LayerParams`] store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Clone, Debug)]
struct Param {
    name: String,
    value: Tensor,
    weight_decay: f64,
}

/// Named learnable tensors with a per-tensor L2 weight-decay coefficient.
#[derive(Clone, Debug, Default)]
pub struct LayerParams {
    params: Vec<Param>,
}

impl LayerParams {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a trainable tensor. Names are unique within a store.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter name {name}");
        self.params.push(Param {
            name,
            value: value.with_requires_grad(true),
            weight_decay: 0.0,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn set_weight_decay(&mut self, id: ParamId, decay: f64) {
        self.params[id.0].weight_decay = decay;
    }

    pub fn weight_decay(&self, id: ParamId) -> f64 {
        self.params[id.0].weight_decay
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Puts a copy of every parameter on `tape`.
    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundParams<'t> {
        BoundParams {
            vars: self.params.iter().map(|p| tape.param(&p.value)).collect(),
        }
    }

    /// Adds the tape gradients of `bound` into each parameter's grad slot.
    /// Parameters the loss did not reach receive an explicit zero gradient.
    pub fn accumulate_grads(&mut self, bound: &BoundParams<'_>) -> Result<()> {
        if bound.vars.len() != self.params.len() {
            return Err(Error::InvalidState("bound parameters from another store".into()));
        }
        for (p, v) in self.params.iter_mut().zip(&bound.vars) {
            match v.grad() {
                Some(g) => p.value.accumulate_grad(g.data())?,
                None => p.value.accumulate_grad(&vec![0.0; p.value.len()])?,
            }
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.value.zero_grad());
    }
}

/// Parameters of one store registered on one tape.
pub struct BoundParams<'t> {
    vars: Vec<Var<'t>>,
}

impl<'t> BoundParams<'t> {
    /// Binds vars created elsewhere, in store order. Used to substitute
    /// probe values for parameters.
    pub fn from_vars(vars: Vec<Var<'t>>) -> Self {
        Self { vars }
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn get(&self, id: ParamId) -> Var<'t> {
        self.vars[id.0]
    }
}

/// Training/inference switch plus the randomness dropout draws from.
pub struct ForwardCtx<'r> {
    rng: Option<&'r mut dyn RngCore>,
}

impl<'r> ForwardCtx<'r> {
    pub fn train(rng: &'r mut dyn RngCore) -> Self {
        Self { rng: Some(rng) }
    }

    pub fn eval() -> Self {
        Self { rng: None }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn dropout<'t>(&mut self, x: Var<'t>, p: f64) -> Result<Var<'t>> {
        match &mut self.rng {
            Some(rng) => x.dropout(p, true, &mut **rng),
            None if (0.0..1.0).contains(&p) => Ok(x),
            None => Err(Error::invalid(format!("dropout probability {p} not in [0, 1)"))),
        }
    }

    /// Inverted dropout on the stored entries of a sparse constant.
    pub fn dropout_csr(&mut self, a: &Arc<CsrMatrix>, p: f64) -> Result<Arc<CsrMatrix>> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::invalid(format!("dropout probability {p} not in [0, 1)")));
        }
        match &mut self.rng {
            Some(rng) if p > 0.0 => {
                let kept = dropout_mask(a.nnz(), p, &mut **rng);
                let scale = 1.0 / (1.0 - p);
                let values = a
                    .values()
                    .iter()
                    .zip(kept)
                    .map(|(v, k)| if k { v * scale } else { 0.0 })
                    .collect();
                Ok(Arc::new(a.with_values(values)?))
            }
            _ => Ok(Arc::clone(a)),
        }
    }
}

/// `x W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    weight: ParamId,
    bias: Option<ParamId>,
}

impl Linear {
    /// Glorot weights, zero bias.
    pub fn new<R: Rng + ?Sized>(
        params: &mut LayerParams,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let weight = params.add(format!("{name}.weight"), glorot_init(fan_in, fan_out, rng));
        let bias = bias.then(|| params.add(format!("{name}.bias"), Tensor::zeros(1, fan_out)));
        Self { weight, bias }
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> Option<ParamId> {
        self.bias
    }

    /// Adds the bias to an already computed `x W`.
    pub fn forward_projected<'t>(&self, p: &BoundParams<'t>, xw: Var<'t>) -> Result<Var<'t>> {
        add_bias(p, xw, self.bias)
    }

    pub fn forward<'t>(&self, p: &BoundParams<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let y = x.matmul(p.get(self.weight))?;
        add_bias(p, y, self.bias)
    }
}

pub(crate) fn add_bias<'t>(p: &BoundParams<'t>, y: Var<'t>, bias: Option<ParamId>) -> Result<Var<'t>> {
    match bias {
        Some(b) => y.add(p.get(b)),
        None => Ok(y),
    }
}

/// Edge structure a layer consumes, computed once per graph: the raw edge
/// index, the index with a self-loop on every node, and the symmetric
/// normalisation weights over the latter.
#[derive(Clone, Debug)]
pub struct PreparedGraph {
    edge_index: EdgeIndex,
    looped: EdgeIndex,
    gcn_weights: Arc<Tensor>,
}

impl PreparedGraph {
    pub fn new(g: &Graph) -> Result<Self> {
        let looped = g.add_self_loops();
        let gcn_weights = Arc::new(looped.gcn_norm()?);
        Ok(Self {
            edge_index: g.edge_index().clone(),
            looped: looped.edge_index().clone(),
            gcn_weights,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.edge_index.num_nodes()
    }

    pub fn edge_index(&self) -> &EdgeIndex {
        &self.edge_index
    }

    pub fn looped(&self) -> &EdgeIndex {
        &self.looped
    }

    /// One weight per edge of [`Self::looped`].
    pub fn gcn_weights(&self) -> &Arc<Tensor> {
        &self.gcn_weights
    }

    /// `Ŝ x` with `Ŝ = D^{-1/2} (A + I) D^{-1/2}`.
    pub fn normalized_propagate<'t>(&self, x: Var<'t>) -> Result<Var<'t>> {
        let weights = x.tape().constant(Arc::clone(&self.gcn_weights));
        propagate(&mut WeightedSum { weights }, &self.looped, x, None)
    }
}

/// Message `w_ji x_j`, summed.
struct WeightedSum<'t> {
    weights: Var<'t>,
}

impl<'t> MessagePassing<'t> for WeightedSum<'t> {
    fn aggregation(&self) -> Aggregation {
        Aggregation::Reduce(ReduceMode::Add)
    }

    fn gathers_target(&self) -> bool {
        false
    }

    fn message(&mut self, edges: &EdgeInputs<'_, 't>) -> Result<Message<'t>> {
        Ok(edges.x_j.mul(self.weights)?.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn store_round_trip() {
        let mut params = LayerParams::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lin = Linear::new(&mut params, "lin", 3, 2, true, &mut rng);
        assert_eq!(params.len(), 2);
        assert_eq!(params.num_scalars(), 8);
        assert_eq!(params.find("lin.bias"), lin.bias());
        params.set_weight_decay(lin.weight(), 5e-4);
        assert_eq!(params.weight_decay(lin.weight()), 5e-4);

        let tape = Tape::new();
        let bound = params.bind(&tape);
        let x = tape.constant(Tensor::ones(4, 3));
        let loss = lin.forward(&bound, x).unwrap().sum().unwrap();
        tape.backward(loss).unwrap();
        params.accumulate_grads(&bound).unwrap();
        assert_eq!(params.get(lin.weight()).grad().unwrap(), &[4.0; 6]);
        assert_eq!(params.get(lin.bias().unwrap()).grad().unwrap(), &[4.0; 2]);
        params.zero_grad();
        assert!(params.get(lin.weight()).grad().is_none());
    }

    #[test]
    #[should_panic(expected = "duplicate")]
    fn names_are_unique() {
        let mut params = LayerParams::new();
        params.add("w", Tensor::zeros(1, 1));
        params.add("w", Tensor::zeros(1, 1));
    }

    #[test]
    fn eval_ctx_skips_dropout_but_validates() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::ones(2, 2));
        let mut ctx = ForwardCtx::eval();
        assert_eq!(ctx.dropout(x, 0.5).unwrap().id(), x.id());
        assert!(ctx.dropout(x, 1.0).is_err());
    }
}
