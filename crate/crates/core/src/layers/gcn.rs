use rand::Rng;

use super::{add_bias, BoundParams, LayerParams, Linear, ParamId, PreparedGraph};
use crate::autodiff::Var;
use crate::error::Result;
use crate::tensor::Tensor;

/// Graph convolution `Ŝ X W + b`. The feature transform runs before
/// propagation so the scatter works on the (usually narrower) output width.
#[derive(Clone, Debug)]
pub struct Gcn {
    lin: Linear,
    bias: Option<ParamId>,
}

impl Gcn {
    pub fn new<R: Rng + ?Sized>(
        params: &mut LayerParams,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let lin = Linear::new(params, name, fan_in, fan_out, false, rng);
        let bias = bias.then(|| params.add(format!("{name}.bias"), Tensor::zeros(1, fan_out)));
        Self { lin, bias }
    }

    pub fn weight(&self) -> ParamId {
        self.lin.weight()
    }

    pub fn forward<'t>(&self, p: &BoundParams<'t>, g: &PreparedGraph, x: Var<'t>) -> Result<Var<'t>> {
        let h = self.lin.forward(p, x)?;
        self.forward_projected(p, g, h)
    }

    /// Layer output from an already computed `x W`.
    pub fn forward_projected<'t>(&self, p: &BoundParams<'t>, g: &PreparedGraph, xw: Var<'t>) -> Result<Var<'t>> {
        let out = g.normalized_propagate(xw)?;
        add_bias(p, out, self.bias)
    }
}
