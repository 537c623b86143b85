use rand::Rng;

use super::{BoundParams, LayerParams, Linear, ParamId};
use crate::autodiff::Var;
use crate::error::Result;
use crate::graph::EdgeIndex;
use crate::message_passing::{propagate, Aggregation, EdgeInputs, Message, MessagePassing};
use crate::scatter::ReduceMode;
use crate::tensor::Tensor;

/// Weight of the centre node in GIN's sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GinEps {
    /// Constant ε (GIN-0 uses 0).
    Fixed(f64),
    /// Learnable ε initialised at 0.
    Learnable,
}

#[derive(Clone, Debug)]
enum Eps {
    Fixed(f64),
    Param(ParamId),
}

/// Graph isomorphism layer `mlp((1 + ε) x_i + Σ_j x_j)` with a two-layer
/// ReLU MLP.
#[derive(Clone, Debug)]
pub struct Gin {
    lin1: Linear,
    lin2: Linear,
    eps: Eps,
}

impl Gin {
    pub fn new<R: Rng + ?Sized>(
        params: &mut LayerParams,
        name: &str,
        fan_in: usize,
        hidden: usize,
        fan_out: usize,
        eps: GinEps,
        rng: &mut R,
    ) -> Self {
        let lin1 = Linear::new(params, &format!("{name}.mlp1"), fan_in, hidden, true, rng);
        let lin2 = Linear::new(params, &format!("{name}.mlp2"), hidden, fan_out, true, rng);
        let eps = match eps {
            GinEps::Fixed(e) => Eps::Fixed(e),
            GinEps::Learnable => Eps::Param(params.add(format!("{name}.eps"), Tensor::zeros(1, 1))),
        };
        Self { lin1, lin2, eps }
    }

    pub fn eps_param(&self) -> Option<ParamId> {
        match self.eps {
            Eps::Param(id) => Some(id),
            Eps::Fixed(_) => None,
        }
    }

    /// Weights of the two MLP layers.
    pub fn mlp_weights(&self) -> (ParamId, ParamId) {
        (self.lin1.weight(), self.lin2.weight())
    }

    fn centre<'t>(&self, p: &BoundParams<'t>) -> CentreWeight<'t> {
        match self.eps {
            Eps::Fixed(e) => CentreWeight::Fixed(e),
            Eps::Param(id) => CentreWeight::Var(p.get(id)),
        }
    }

    pub fn forward<'t>(&self, p: &BoundParams<'t>, edge_index: &EdgeIndex, x: Var<'t>) -> Result<Var<'t>> {
        let h = propagate(&mut GinSum { eps: self.centre(p) }, edge_index, x, None)?;
        let h = self.lin1.forward(p, h)?.relu()?;
        self.lin2.forward(p, h)
    }

    /// Layer output from `x W_1`, the input already multiplied by the first
    /// MLP weight. Equal to [`Gin::forward`] since the sum is linear.
    pub fn forward_projected<'t>(&self, p: &BoundParams<'t>, edge_index: &EdgeIndex, xw: Var<'t>) -> Result<Var<'t>> {
        let h = propagate(&mut GinSum { eps: self.centre(p) }, edge_index, xw, None)?;
        let h = self.lin1.forward_projected(p, h)?.relu()?;
        self.lin2.forward(p, h)
    }
}

#[derive(Clone, Copy)]
enum CentreWeight<'t> {
    Fixed(f64),
    Var(Var<'t>),
}

struct GinSum<'t> {
    eps: CentreWeight<'t>,
}

impl<'t> MessagePassing<'t> for GinSum<'t> {
    fn aggregation(&self) -> Aggregation {
        Aggregation::Reduce(ReduceMode::Add)
    }

    fn gathers_target(&self) -> bool {
        false
    }

    fn message(&mut self, edges: &EdgeInputs<'_, 't>) -> Result<Message<'t>> {
        Ok(edges.x_j.into())
    }

    fn update(&mut self, x: Var<'t>, aggregated: Var<'t>) -> Result<Var<'t>> {
        let centre = match self.eps {
            CentreWeight::Fixed(e) => x.scale(1.0 + e)?,
            CentreWeight::Var(e) => x.mul(e)?.add(x)?,
        };
        centre.add(aggregated)
    }
}

/// The pre-MLP part of GIN with a fixed ε: `(1 + ε) x_i + Σ_j x_j`.
pub fn gin_aggregate<'t>(edge_index: &EdgeIndex, x: Var<'t>, eps: f64) -> Result<Var<'t>> {
    propagate(
        &mut GinSum {
            eps: CentreWeight::Fixed(eps),
        },
        edge_index,
        x,
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::graph::{erdos_renyi, Graph};
    use crate::testing::{assert_layer_gradients, dense_adjacency, dense_matmul, max_rel_diff, uniform};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_cases() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::column(&[1.0, 2.0]));
        let none = EdgeIndex::empty(2);
        assert_eq!(gin_aggregate(&none, x, 0.0).unwrap().value().data(), &[1.0, 2.0]);
        let pair = EdgeIndex::new(vec![0, 1], vec![1, 0], 2).unwrap();
        assert_eq!(gin_aggregate(&pair, x, 0.0).unwrap().value().data(), &[3.0, 3.0]);
    }

    #[test]
    fn matches_dense_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let g = erdos_renyi(30, 4.0, true, &mut rng).unwrap();
        let mut params = LayerParams::new();
        let gin = Gin::new(&mut params, "gin", g.num_features(), 8, 3, GinEps::Learnable, &mut rng);
        let eps = 0.37;
        *params.get_mut(gin.eps_param().unwrap()) = Tensor::scalar(eps);
        for id in params.ids().collect::<Vec<_>>() {
            if params.name(id).ends_with("bias") {
                let (r, c) = params.get(id).shape();
                *params.get_mut(id) = uniform(r, c, -0.5, 0.5, &mut rng);
            }
        }

        // ((1 + ε) I + Aᵀ) X, then the MLP by hand.
        let mut m = dense_adjacency(&g).transpose();
        for i in 0..30 {
            m.set(i, i, m.get(i, i) + 1.0 + eps);
        }
        let get = |name: &str| params.get(params.find(name).unwrap()).clone();
        let add_row = |t: Tensor, b: &Tensor| {
            let cols = t.cols();
            let data = t.data().iter().enumerate().map(|(k, v)| v + b.data()[k % cols]).collect();
            Tensor::new(t.rows(), cols, data).unwrap()
        };
        let h = dense_matmul(&m, g.x());
        let h = add_row(dense_matmul(&h, &get("gin.mlp1.weight")), &get("gin.mlp1.bias")).map(|v| v.max(0.0));
        let expected = add_row(dense_matmul(&h, &get("gin.mlp2.weight")), &get("gin.mlp2.bias"));

        let tape = Tape::new();
        let p = params.bind(&tape);
        let out = gin.forward(&p, g.edge_index(), tape.constant(g.x().clone())).unwrap();
        assert!(max_rel_diff(&out.value(), &expected) < 1e-10);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let g = erdos_renyi(20, 3.0, true, &mut rng).unwrap();
        let mut params = LayerParams::new();
        let gin = Gin::new(&mut params, "gin", 3, 4, 2, GinEps::Learnable, &mut rng);
        *params.get_mut(gin.eps_param().unwrap()) = Tensor::scalar(0.2);
        let x = uniform(20, 3, -1.0, 1.0, &mut rng);
        let probe = uniform(20, 2, -1.0, 1.0, &mut rng);
        let ei = g.edge_index().clone();
        assert_layer_gradients(&params, &[x], |tape, p, v| {
            gin.forward(p, &ei, v[0])?.mul(tape.constant(probe.clone()))?.sum()
        });
    }

    #[test]
    fn projected_path_matches_plain_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let g = erdos_renyi(25, 3.0, true, &mut rng).unwrap();
        let mut params = LayerParams::new();
        let gin = Gin::new(&mut params, "gin", g.num_features(), 5, 3, GinEps::Learnable, &mut rng);
        *params.get_mut(gin.eps_param().unwrap()) = Tensor::scalar(-0.3);
        let tape = Tape::new();
        let p = params.bind(&tape);
        let x = tape.constant(g.x().clone());
        let plain = gin.forward(&p, g.edge_index(), x).unwrap();
        let xw = x.matmul(p.get(gin.mlp_weights().0)).unwrap();
        let projected = gin.forward_projected(&p, g.edge_index(), xw).unwrap();
        assert!(max_rel_diff(&plain.value(), &projected.value()) < 1e-12);
    }

    #[test]
    fn isolated_nodes_pass_through_centre_term() {
        let g = Graph::new(Tensor::column(&[4.0]), vec![], vec![]).unwrap();
        let tape = Tape::new();
        let out = gin_aggregate(g.edge_index(), tape.constant(g.x().clone()), 0.5).unwrap();
        assert_eq!(out.value().data(), &[6.0]);
    }
}
