//! Fixtures shared by the criterion benches.

use gsnn_core::graph::{erdos_renyi_with_features, Graph};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Directed G(n, p) graph with mean out-degree `degree` and `features`
/// uniform feature columns. Same seed, same graph.
pub fn random_graph(n: usize, degree: f64, features: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    erdos_renyi_with_features(n, degree, true, features, &mut rng).expect("valid graph parameters")
}

/// Undirected variant, the shape layers expect.
pub fn random_undirected(n: usize, degree: f64, features: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    erdos_renyi_with_features(n, degree, false, features, &mut rng).expect("valid graph parameters")
}
