use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::layers::{
    Appnp, BoundParams, ForwardCtx, Gat, GatConfig, Gcn, Gin, GinEps, LayerParams, Linear, ParamId, PreparedGraph, Sgc,
};
use crate::scatter::ExecutionMode;
use crate::sparse::{spmm, CsrMatrix};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Gcn,
    Sgc,
    Gat,
    Gin,
    Appnp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [ModelKind::Gcn, ModelKind::Sgc, ModelKind::Gat, ModelKind::Gin, ModelKind::Appnp];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gcn => "gcn",
            ModelKind::Sgc => "sgc",
            ModelKind::Gat => "gat",
            ModelKind::Gin => "gin",
            ModelKind::Appnp => "appnp",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown model {s:?}, expected gcn, sgc, gat, gin or appnp")))
    }
}

/// Architecture and optimiser settings of one model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyper {
    pub hidden: usize,
    /// Heads of the first GAT layer; the output layer has one.
    pub heads: usize,
    pub dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    /// SGC hops or APPNP iterations.
    pub k: usize,
    pub alpha: f64,
}

impl Hyper {
    pub fn for_kind(kind: ModelKind) -> Self {
        let base = Hyper {
            hidden: 16,
            heads: 1,
            dropout: 0.5,
            lr: 0.01,
            weight_decay: 5e-4,
            epochs: 200,
            patience: 10,
            k: 2,
            alpha: 0.1,
        };
        match kind {
            ModelKind::Gcn | ModelKind::Gin | ModelKind::Sgc => base,
            ModelKind::Gat => Hyper {
                hidden: 8,
                heads: 8,
                lr: 0.005,
                ..base
            },
            ModelKind::Appnp => Hyper {
                hidden: 64,
                k: 10,
                ..base
            },
        }
    }
}

#[derive(Clone, Debug)]
enum Net {
    Gcn(Gcn, Gcn),
    Sgc(Sgc),
    Gat(Gat, Gat),
    Gin(Gin, Gin),
    Appnp(Linear, Linear, Appnp),
}

/// A two-stage node classifier producing per-node log-probabilities.
#[derive(Clone, Debug)]
pub struct Model {
    kind: ModelKind,
    hyper: Hyper,
    net: Net,
    pub params: LayerParams,
}

/// Input features, stored sparse when mostly zero.
#[derive(Clone, Debug)]
pub enum Features {
    Dense(Arc<Tensor>),
    Sparse(Arc<CsrMatrix>),
}

/// Density below which features are stored sparse.
pub const SPARSE_FEATURE_DENSITY: f64 = 0.1;

impl Features {
    pub fn new(x: &Tensor) -> Self {
        let nnz = x.data().iter().filter(|v| **v != 0.0).count();
        if (nnz as f64) < SPARSE_FEATURE_DENSITY * x.len() as f64 {
            Features::Sparse(Arc::new(CsrMatrix::from_dense(x)))
        } else {
            Features::Dense(Arc::new(x.clone()))
        }
    }

    /// `dropout(x) W` for each weight in `weights`, sharing one dropout draw.
    fn project<'t>(
        &self,
        tape: &'t Tape,
        p: &BoundParams<'t>,
        weights: &[ParamId],
        ctx: &mut ForwardCtx<'_>,
        drop: f64,
    ) -> Result<Vec<Var<'t>>> {
        match self {
            Features::Dense(x) => {
                let x = ctx.dropout(tape.constant(Arc::clone(x)), drop)?;
                weights.iter().map(|&w| x.matmul(p.get(w))).collect()
            }
            Features::Sparse(a) => {
                let a = ctx.dropout_csr(a, drop)?;
                weights.iter().map(|&w| spmm(&a, p.get(w))).collect()
            }
        }
    }
}

/// Graph-dependent inputs of a model, computed once per graph.
pub struct ModelInput {
    pub graph: PreparedGraph,
    pub x: Features,
}

impl Model {
    /// Weight decay goes to the first layer's weight matrices for GCN, GAT
    /// and GIN, and to every weight matrix for SGC and APPNP.
    pub fn new<R: Rng + ?Sized>(
        kind: ModelKind,
        in_features: usize,
        classes: usize,
        hyper: Hyper,
        rng: &mut R,
    ) -> Result<Self> {
        let mut p = LayerParams::new();
        let h = hyper.hidden;
        let (net, decayed): (Net, Vec<ParamId>) = match kind {
            ModelKind::Gcn => {
                let a = Gcn::new(&mut p, "conv1", in_features, h, true, rng);
                let b = Gcn::new(&mut p, "conv2", h, classes, true, rng);
                let w = vec![a.weight()];
                (Net::Gcn(a, b), w)
            }
            ModelKind::Sgc => {
                let s = Sgc::new(&mut p, "lin", in_features, classes, hyper.k, rng)?;
                let w = vec![s.weight()];
                (Net::Sgc(s), w)
            }
            ModelKind::Gat => {
                let first = GatConfig {
                    heads: hyper.heads,
                    head_dim: h,
                    concat: true,
                    attention_dropout: hyper.dropout,
                    ..GatConfig::default()
                };
                let a = Gat::new(&mut p, "conv1", in_features, first, rng)?;
                let last = GatConfig {
                    heads: 1,
                    head_dim: classes,
                    concat: false,
                    ..first
                };
                let b = Gat::new(&mut p, "conv2", a.out_width(), last, rng)?;
                let w = (0..hyper.heads).map(|k| a.head_params(k).0).collect();
                (Net::Gat(a, b), w)
            }
            ModelKind::Gin => {
                let a = Gin::new(&mut p, "conv1", in_features, h, h, GinEps::Fixed(0.0), rng);
                let b = Gin::new(&mut p, "conv2", h, h, classes, GinEps::Fixed(0.0), rng);
                let w = ["conv1.mlp1.weight", "conv1.mlp2.weight"]
                    .iter()
                    .map(|n| p.find(n).expect("registered"))
                    .collect();
                (Net::Gin(a, b), w)
            }
            ModelKind::Appnp => {
                let a = Linear::new(&mut p, "lin1", in_features, h, true, rng);
                let b = Linear::new(&mut p, "lin2", h, classes, true, rng);
                let w = vec![a.weight(), b.weight()];
                (Net::Appnp(a, b, Appnp::new(hyper.k, hyper.alpha)?), w)
            }
        };
        for id in decayed {
            p.set_weight_decay(id, hyper.weight_decay);
        }
        Ok(Self {
            kind,
            hyper,
            net,
            params: p,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn hyper(&self) -> &Hyper {
        &self.hyper
    }

    /// Normalised graph plus, for SGC, the propagated features `Ŝ^K X`.
    pub fn prepare(&self, graph: PreparedGraph, x: &Tensor, mode: ExecutionMode) -> Result<ModelInput> {
        let x = match &self.net {
            Net::Sgc(s) => Features::Dense(Arc::new(s.precompute(&graph, x, mode)?)),
            _ => Features::new(x),
        };
        Ok(ModelInput { graph, x })
    }

    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        p: &BoundParams<'t>,
        input: &ModelInput,
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<Var<'t>> {
        let g = &input.graph;
        let drop = self.hyper.dropout;
        let x = &input.x;
        let out = match &self.net {
            Net::Gcn(a, b) => {
                let xw = x.project(tape, p, &[a.weight()], ctx, drop)?;
                let h = a.forward_projected(p, g, xw[0])?.relu()?;
                b.forward(p, g, ctx.dropout(h, drop)?)?
            }
            Net::Sgc(s) => match x {
                Features::Dense(x) => s.forward_cached(p, tape.constant(Arc::clone(x)))?,
                Features::Sparse(_) => unreachable!("sgc input is the dense propagated matrix"),
            },
            Net::Gat(a, b) => {
                let weights: Vec<ParamId> = (0..a.config().heads).map(|k| a.head_params(k).0).collect();
                let z = x.project(tape, p, &weights, ctx, drop)?;
                let h = elu(a.forward_projected(p, g, &z, ctx)?)?;
                b.forward(p, g, ctx.dropout(h, drop)?, ctx)?
            }
            Net::Gin(a, b) => {
                let xw = x.project(tape, p, &[a.mlp_weights().0], ctx, drop)?;
                let h = a.forward_projected(p, g.edge_index(), xw[0])?.relu()?;
                b.forward(p, g.edge_index(), ctx.dropout(h, drop)?)?
            }
            Net::Appnp(a, b, prop) => {
                let xw = x.project(tape, p, &[a.weight()], ctx, drop)?;
                let h = a.forward_projected(p, xw[0])?.relu()?;
                let h = b.forward(p, ctx.dropout(h, drop)?)?;
                prop.forward(g, h)?
            }
        };
        out.row_log_softmax()
    }
}

/// `x` for `x > 0`, `exp(x) - 1` otherwise.
pub fn elu(x: Var<'_>) -> Result<Var<'_>> {
    let neg = x.scale(-1.0)?.relu()?.scale(-1.0)?;
    let minus_one = x.tape().constant(Tensor::scalar(-1.0));
    x.relu()?.add(neg.exp()?.add(minus_one)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::erdos_renyi;
    use crate::testing::{assert_gradients, uniform};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("mlp".parse::<ModelKind>().is_err());
    }

    #[test]
    fn elu_values_and_gradient() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::column(&[-1.0, 0.0, 2.0]));
        let y = elu(x).unwrap().value();
        assert!((y.data()[0] - ((-1f64).exp() - 1.0)).abs() < 1e-15);
        assert_eq!(&y.data()[1..], &[0.0, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = uniform(4, 3, -2.0, 2.0, &mut rng).map(|v| if v.abs() < 0.05 { 0.5 } else { v });
        assert_gradients(&[v], |_, x| elu(x[0])?.sum());
    }

    #[test]
    fn every_model_emits_log_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        let g = erdos_renyi(25, 3.0, false, &mut rng).unwrap();
        for kind in ModelKind::ALL {
            let model = Model::new(kind, g.num_features(), 4, Hyper::for_kind(kind), &mut rng).unwrap();
            let input = model
                .prepare(PreparedGraph::new(&g).unwrap(), g.x(), ExecutionMode::Sequential)
                .unwrap();
            let tape = Tape::new();
            let p = model.params.bind(&tape);
            let out = model.forward(&tape, &p, &input, &mut ForwardCtx::train(&mut rng)).unwrap();
            assert_eq!(out.shape(), (25, 4));
            for r in 0..25 {
                let s: f64 = out.value().row(r).iter().map(|v| v.exp()).sum();
                assert!((s - 1.0).abs() < 1e-12, "{kind:?}");
            }
        }
    }

    #[test]
    fn sparse_and_dense_inputs_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(92);
        let g = erdos_renyi(30, 3.0, false, &mut rng).unwrap();
        let x = g.x().map(|v| if v > 0.9 { v } else { 0.0 });
        let sparse = Features::new(&x);
        assert!(matches!(sparse, Features::Sparse(_)));
        let dense = Features::Dense(Arc::new(x.clone()));
        for kind in ModelKind::ALL {
            let model = Model::new(kind, g.num_features(), 3, Hyper::for_kind(kind), &mut rng).unwrap();
            let mut outs = Vec::new();
            for features in [&sparse, &dense] {
                let input = ModelInput {
                    graph: PreparedGraph::new(&g).unwrap(),
                    x: features.clone(),
                };
                let input = if kind == ModelKind::Sgc {
                    model.prepare(input.graph, &x, ExecutionMode::Sequential).unwrap()
                } else {
                    input
                };
                let tape = Tape::new();
                let p = model.params.bind(&tape);
                let out = model.forward(&tape, &p, &input, &mut ForwardCtx::eval()).unwrap();
                out.sum().unwrap().backward().unwrap();
                let grads: Vec<f64> = model.params.ids().flat_map(|id| p.get(id).grad().map(|g| g.data().to_vec()).unwrap_or_default()).collect();
                outs.push(((*out.value()).clone(), grads));
            }
            assert!(outs[0].0.max_abs_diff(&outs[1].0) < 1e-12, "{kind:?}");
            let gd = outs[0].1.iter().zip(&outs[1].1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(gd < 1e-12, "{kind:?}");
        }
    }

    #[test]
    fn weight_decay_follows_the_layer_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let mut decayed = |kind| {
            let m = Model::new(kind, 6, 3, Hyper::for_kind(kind), &mut rng).unwrap();
            let mut names: Vec<String> = m
                .params
                .ids()
                .filter(|&id| m.params.weight_decay(id) > 0.0)
                .map(|id| m.params.name(id).to_string())
                .collect();
            names.sort();
            names
        };
        assert_eq!(decayed(ModelKind::Gcn), vec!["conv1.weight"]);
        assert_eq!(decayed(ModelKind::Appnp), vec!["lin1.weight", "lin2.weight"]);
        assert_eq!(decayed(ModelKind::Sgc), vec!["lin.weight"]);
        assert_eq!(decayed(ModelKind::Gat).len(), 8);
    }
}
