use rand::Rng;

use super::{BoundParams, LayerParams, Linear, ParamId, PreparedGraph};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::scatter::ExecutionMode;
use crate::tensor::Tensor;

/// Simplified graph convolution `Ŝ^K X W + b`: K parameter-free
/// propagation steps followed by one linear map. The propagated features do
/// not depend on the weights and can be computed once per graph.
#[derive(Clone, Debug)]
pub struct Sgc {
    lin: Linear,
    k: usize,
}

impl Sgc {
    pub fn new<R: Rng + ?Sized>(
        params: &mut LayerParams,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        k: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("sgc needs at least one hop"));
        }
        Ok(Self {
            lin: Linear::new(params, name, fan_in, fan_out, true, rng),
            k,
        })
    }

    pub fn hops(&self) -> usize {
        self.k
    }

    pub fn weight(&self) -> ParamId {
        self.lin.weight()
    }

    /// `Ŝ^K x`, differentiable in `x`.
    pub fn propagate<'t>(&self, g: &PreparedGraph, x: Var<'t>) -> Result<Var<'t>> {
        (0..self.k).try_fold(x, |h, _| g.normalized_propagate(h))
    }

    /// `Ŝ^K x` outside of any training tape; the cacheable part.
    pub fn precompute(&self, g: &PreparedGraph, x: &Tensor, mode: ExecutionMode) -> Result<Tensor> {
        let tape = Tape::with_mode(mode);
        let out = self.propagate(g, tape.constant(x.clone()))?;
        Ok((*out.value()).clone())
    }

    /// Full layer: propagation then linear map.
    pub fn forward<'t>(&self, p: &BoundParams<'t>, g: &PreparedGraph, x: Var<'t>) -> Result<Var<'t>> {
        let h = self.propagate(g, x)?;
        self.lin.forward(p, h)
    }

    /// Linear map applied to features from [`Sgc::precompute`].
    pub fn forward_cached<'t>(&self, p: &BoundParams<'t>, propagated: Var<'t>) -> Result<Var<'t>> {
        self.lin.forward(p, propagated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{erdos_renyi, Graph};
    use crate::layers::Gcn;
    use crate::testing::{assert_layer_gradients, dense_gcn_matrix, dense_matmul, max_rel_diff, uniform};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn with_identity(params: &mut LayerParams, sgc: &Sgc, f: usize) {
        *params.get_mut(sgc.weight()) = Tensor::eye(f);
    }

    #[test]
    fn zero_hops_rejected() {
        let mut params = LayerParams::new();
        assert!(Sgc::new(&mut params, "sgc", 2, 2, 0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn one_hop_identity_equals_gcn_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let g = erdos_renyi(25, 3.0, false, &mut rng).unwrap();
        let f = g.num_features();
        let prepared = PreparedGraph::new(&g).unwrap();
        let mut params = LayerParams::new();
        let sgc = Sgc::new(&mut params, "sgc", f, f, 1, &mut rng).unwrap();
        let gcn = Gcn::new(&mut params, "gcn", f, f, false, &mut rng);
        with_identity(&mut params, &sgc, f);
        *params.get_mut(gcn.weight()) = Tensor::eye(f);

        let tape = Tape::new();
        let p = params.bind(&tape);
        let x = tape.constant(g.x().clone());
        let a = sgc.forward(&p, &prepared, x).unwrap();
        let b = gcn.forward(&p, &prepared, x).unwrap();
        assert!(max_rel_diff(&a.value(), &b.value()) < 1e-14);
    }

    #[test]
    fn complete_graph_keeps_constant_features() {
        let n = 6;
        let (mut src, mut dst) = (Vec::new(), Vec::new());
        for i in 0..n {
            for j in 0..n {
                src.push(i);
                dst.push(j);
            }
        }
        let g = Graph::new(Tensor::filled(n, 2, 3.5), src, dst).unwrap();
        let prepared = PreparedGraph::new(&g).unwrap();
        let mut params = LayerParams::new();
        let sgc = Sgc::new(&mut params, "sgc", 2, 2, 3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let out = sgc.precompute(&prepared, g.x(), ExecutionMode::Sequential).unwrap();
        for v in out.data() {
            assert!((v - 3.5).abs() < 1e-14);
        }
    }

    #[test]
    fn two_hops_match_dense_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let g = erdos_renyi(30, 4.0, false, &mut rng).unwrap();
        let prepared = PreparedGraph::new(&g).unwrap();
        let mut params = LayerParams::new();
        let sgc = Sgc::new(&mut params, "sgc", g.num_features(), 3, 2, &mut rng).unwrap();
        let w = params.get(sgc.weight()).clone();
        let s = dense_gcn_matrix(&g);
        let expected = dense_matmul(&dense_matmul(&s, &dense_matmul(&s, g.x())), &w);

        let tape = Tape::new();
        let p = params.bind(&tape);
        let out = sgc.forward(&p, &prepared, tape.constant(g.x().clone())).unwrap();
        assert!(max_rel_diff(&out.value(), &expected) < 1e-10);
    }

    #[test]
    fn cache_is_bitwise_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let g = erdos_renyi(50, 5.0, false, &mut rng).unwrap();
        let prepared = PreparedGraph::new(&g).unwrap();
        let mut params = LayerParams::new();
        let sgc = Sgc::new(&mut params, "sgc", g.num_features(), 4, 2, &mut rng).unwrap();
        let cached = sgc.precompute(&prepared, g.x(), ExecutionMode::Sequential).unwrap();

        let tape = Tape::with_mode(ExecutionMode::Sequential);
        let p = params.bind(&tape);
        let uncached = sgc.forward(&p, &prepared, tape.constant(g.x().clone())).unwrap();
        let from_cache = sgc.forward_cached(&p, tape.constant(cached)).unwrap();
        assert_eq!(uncached.value().data(), from_cache.value().data());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let g = erdos_renyi(20, 3.0, false, &mut rng).unwrap();
        let prepared = PreparedGraph::new(&g).unwrap();
        let mut params = LayerParams::new();
        let sgc = Sgc::new(&mut params, "sgc", 3, 2, 2, &mut rng).unwrap();
        let x = uniform(20, 3, -1.0, 1.0, &mut rng);
        let probe = uniform(20, 2, -1.0, 1.0, &mut rng);
        assert_layer_gradients(&params, &[x], |tape, p, v| {
            sgc.forward(p, &prepared, v[0])?.mul(tape.constant(probe.clone()))?.sum()
        });
    }
}
