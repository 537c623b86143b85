use super::PreparedGraph;
use crate::autodiff::Var;
use crate::error::{Error, Result};

/// Personalised-PageRank propagation of predictions:
/// `z⁰ = h`, `z^{k+1} = (1 − α) Ŝ z^k + α h`, returning `z^K`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Appnp {
    pub k: usize,
    pub alpha: f64,
}

impl Appnp {
    /// `k ≥ 1` and `alpha ∈ [0, 1]`.
    pub fn new(k: usize, alpha: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("appnp needs at least one iteration"));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("appnp teleport {alpha} outside [0, 1]")));
        }
        Ok(Self { k, alpha })
    }

    pub fn forward<'t>(&self, g: &PreparedGraph, h: Var<'t>) -> Result<Var<'t>> {
        appnp_propagate(g, h, self.k, self.alpha)
    }
}

pub fn appnp_propagate<'t>(g: &PreparedGraph, h: Var<'t>, k: usize, alpha: f64) -> Result<Var<'t>> {
    let cfg = Appnp::new(k, alpha)?;
    if cfg.alpha == 1.0 {
        return Ok(h);
    }
    let teleport = h.scale(cfg.alpha)?;
    let mut z = h;
    for _ in 0..cfg.k {
        z = g.normalized_propagate(z)?.scale(1.0 - cfg.alpha)?.add(teleport)?;
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::graph::erdos_renyi;
    use crate::tensor::Tensor;
    use crate::testing::{assert_gradients, dense_gcn_matrix, dense_matmul, max_rel_diff, uniform};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_checks() {
        assert!(Appnp::new(0, 0.1).is_err());
        assert!(Appnp::new(1, -0.1).is_err());
        assert!(Appnp::new(1, 1.5).is_err());
        assert!(Appnp::new(10, 0.1).is_ok());
    }

    #[test]
    fn full_teleport_is_identity_and_zero_teleport_is_one_hop() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let g = erdos_renyi(20, 3.0, false, &mut rng).unwrap();
        let prepared = PreparedGraph::new(&g).unwrap();
        let tape = Tape::new();
        let h = tape.constant(uniform(20, 3, -1.0, 1.0, &mut rng));
        let same = appnp_propagate(&prepared, h, 7, 1.0).unwrap();
        assert_eq!(same.value().data(), h.value().data());
        let one = appnp_propagate(&prepared, h, 1, 0.0).unwrap();
        let hop = prepared.normalized_propagate(h).unwrap();
        assert_eq!(one.value().data(), hop.value().data());
    }

    #[test]
    fn matches_dense_power_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let g = erdos_renyi(40, 4.0, false, &mut rng).unwrap();
        let prepared = PreparedGraph::new(&g).unwrap();
        let h0 = uniform(40, 3, -1.0, 1.0, &mut rng);
        let s = dense_gcn_matrix(&g);
        let mut z = h0.clone();
        for _ in 0..10 {
            let sz = dense_matmul(&s, &z);
            let data = sz.data().iter().zip(h0.data()).map(|(a, b)| 0.9 * a + 0.1 * b).collect();
            z = Tensor::new(40, 3, data).unwrap();
        }
        let tape = Tape::new();
        let out = appnp_propagate(&prepared, tape.constant(h0), 10, 0.1).unwrap();
        assert!(max_rel_diff(&out.value(), &z) < 1e-10);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let g = erdos_renyi(20, 3.0, false, &mut rng).unwrap();
        let prepared = PreparedGraph::new(&g).unwrap();
        let h = uniform(20, 2, -1.0, 1.0, &mut rng);
        let probe = uniform(20, 2, -1.0, 1.0, &mut rng);
        assert_gradients(&[h], |tape, v| {
            appnp_propagate(&prepared, v[0], 10, 0.1)?.mul(tape.constant(probe.clone()))?.sum()
        });
    }
}
