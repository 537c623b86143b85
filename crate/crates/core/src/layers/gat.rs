use rand::Rng;

use super::{add_bias, BoundParams, ForwardCtx, LayerParams, ParamId, PreparedGraph};
use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::init::glorot_init;
use crate::message_passing::{propagate, Aggregation, EdgeInputs, Message, MessagePassing};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GatConfig {
    pub heads: usize,
    /// Output width of each head.
    pub head_dim: usize,
    /// Concatenate heads (hidden layers) or average them (final layer).
    pub concat: bool,
    pub negative_slope: f64,
    /// Dropout applied to the normalised attention coefficients.
    pub attention_dropout: f64,
    pub bias: bool,
}

impl Default for GatConfig {
    fn default() -> Self {
        Self {
            heads: 1,
            head_dim: 8,
            concat: true,
            negative_slope: 0.2,
            attention_dropout: 0.0,
            bias: true,
        }
    }
}

#[derive(Clone, Debug)]
struct Head {
    weight: ParamId,
    /// The attention vector `a = [a_dst ‖ a_src]` split in its two halves.
    att_dst: ParamId,
    att_src: ParamId,
}

/// Graph attention: per head `z = x W`, `e_ji = leaky_relu(a_dst·z_i +
/// a_src·z_j)`, `α = softmax_j(e_ji)` over each target's in-edges, output
/// `Σ_j α_ji z_j`. Every node attends to itself through the self-looped
/// edge index of the prepared graph.
#[derive(Clone, Debug)]
pub struct Gat {
    cfg: GatConfig,
    heads: Vec<Head>,
    bias: Option<ParamId>,
}

impl Gat {
    pub fn new<R: Rng + ?Sized>(
        params: &mut LayerParams,
        name: &str,
        fan_in: usize,
        cfg: GatConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if cfg.heads == 0 {
            return Err(Error::invalid("gat needs at least one head"));
        }
        let h = cfg.head_dim;
        let heads = (0..cfg.heads)
            .map(|k| {
                let weight = params.add(format!("{name}.head{k}.weight"), glorot_init(fan_in, h, rng));
                let att = glorot_init(2 * h, 1, rng);
                let att_dst = params.add(
                    format!("{name}.head{k}.att_dst"),
                    Tensor::new(h, 1, att.data()[..h].to_vec())?,
                );
                let att_src = params.add(
                    format!("{name}.head{k}.att_src"),
                    Tensor::new(h, 1, att.data()[h..].to_vec())?,
                );
                Ok(Head {
                    weight,
                    att_dst,
                    att_src,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let bias = cfg
            .bias
            .then(|| params.add(format!("{name}.bias"), Tensor::zeros(1, Self::width(&cfg))));
        Ok(Self { cfg, heads, bias })
    }

    fn width(cfg: &GatConfig) -> usize {
        if cfg.concat {
            cfg.heads * cfg.head_dim
        } else {
            cfg.head_dim
        }
    }

    pub fn out_width(&self) -> usize {
        Self::width(&self.cfg)
    }

    pub fn config(&self) -> &GatConfig {
        &self.cfg
    }

    /// Weight matrix and attention halves `(a_dst, a_src)` of head `k`.
    pub fn head_params(&self, k: usize) -> (ParamId, ParamId, ParamId) {
        let h = &self.heads[k];
        (h.weight, h.att_dst, h.att_src)
    }

    pub fn forward<'t>(
        &self,
        p: &BoundParams<'t>,
        g: &PreparedGraph,
        x: Var<'t>,
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<Var<'t>> {
        let z = self
            .heads
            .iter()
            .map(|h| x.matmul(p.get(h.weight)))
            .collect::<Result<Vec<_>>>()?;
        self.forward_projected(p, g, &z, ctx)
    }

    /// Layer output from the per-head projections `x W_k`.
    pub fn forward_projected<'t>(
        &self,
        p: &BoundParams<'t>,
        g: &PreparedGraph,
        z: &[Var<'t>],
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<Var<'t>> {
        if z.len() != self.heads.len() {
            return Err(Error::dim(
                "gat",
                format!("{} projections for {} heads", z.len(), self.heads.len()),
            ));
        }
        let mut outs = Vec::with_capacity(self.heads.len());
        for (head, &z) in self.heads.iter().zip(z) {
            let mut pass = HeadPass {
                att_dst: p.get(head.att_dst),
                att_src: p.get(head.att_src),
                slope: self.cfg.negative_slope,
                dropout: self.cfg.attention_dropout,
                ctx: &mut *ctx,
            };
            outs.push(propagate(&mut pass, g.looped(), z, None)?);
        }
        let combined = if self.cfg.concat {
            Var::concat_cols(&outs)?
        } else {
            let mut acc = outs[0];
            for o in &outs[1..] {
                acc = acc.add(*o)?;
            }
            acc.scale(1.0 / outs.len() as f64)?
        };
        add_bias(p, combined, self.bias)
    }
}

struct HeadPass<'c, 'r, 't> {
    att_dst: Var<'t>,
    att_src: Var<'t>,
    slope: f64,
    dropout: f64,
    ctx: &'c mut ForwardCtx<'r>,
}

impl<'t> MessagePassing<'t> for HeadPass<'_, '_, 't> {
    fn aggregation(&self) -> Aggregation {
        Aggregation::SoftmaxWeightedAdd
    }

    fn message(&mut self, edges: &EdgeInputs<'_, 't>) -> Result<Message<'t>> {
        let z_i = edges.x_i.expect("gat gathers targets");
        let logits = z_i
            .matmul(self.att_dst)?
            .add(edges.x_j.matmul(self.att_src)?)?
            .leaky_relu(self.slope)?;
        Ok(Message {
            value: edges.x_j,
            logits: Some(logits),
        })
    }

    fn attention(&mut self, alpha: Var<'t>) -> Result<Var<'t>> {
        self.ctx.dropout(alpha, self.dropout)
    }
}
