use rand::Rng;

use super::Graph;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Feature width of generated graphs unless overridden.
pub const DEFAULT_FEATURES: usize = 16;

/// G(n, p) graph with `p = avg_degree / (n - 1)` and uniform `[-1, 1)`
/// features of width [`DEFAULT_FEATURES`]. Undirected graphs store both
/// directions of every edge. The result is coalesced.
pub fn erdos_renyi<R: Rng + ?Sized>(
    n: usize,
    avg_degree: f64,
    directed: bool,
    rng: &mut R,
) -> Result<Graph> {
    erdos_renyi_with_features(n, avg_degree, directed, DEFAULT_FEATURES, rng)
}

pub fn erdos_renyi_with_features<R: Rng + ?Sized>(
    n: usize,
    avg_degree: f64,
    directed: bool,
    features: usize,
    rng: &mut R,
) -> Result<Graph> {
    if n < 2 || !(avg_degree > 0.0 && avg_degree < (n - 1) as f64) {
        return Err(Error::invalid(format!(
            "erdos_renyi needs n >= 2 and 0 < avg_degree < n - 1, got n={n}, avg_degree={avg_degree}"
        )));
    }
    let p = avg_degree / (n - 1) as f64;
    let log_q = (1.0 - p).ln();
    let mut src = Vec::new();
    let mut dst = Vec::new();

    // Geometric skipping: the gap to the next present pair is
    // floor(ln(1 - r) / ln(1 - p)).
    let skip = |rng: &mut R| -> usize {
        let r: f64 = rng.random();
        ((1.0 - r).ln() / log_q).floor() as usize
    };
    for u in 0..n {
        // Candidate targets for u: all v != u (directed) or v > u (undirected).
        let (start, len) = if directed { (0, n - 1) } else { (u + 1, n - u - 1) };
        let mut pos = skip(rng);
        while pos < len {
            let v = if directed {
                if pos < u {
                    pos
                } else {
                    pos + 1
                }
            } else {
                start + pos
            };
            src.push(u);
            dst.push(v);
            pos += 1 + skip(rng);
        }
    }
    if !directed {
        let (s, d) = (src.clone(), dst.clone());
        src.extend_from_slice(&d);
        dst.extend_from_slice(&s);
    }

    let x: Vec<f64> = (0..n * features).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g = Graph::new(Tensor::new(n, features, x)?, src, dst)?;
    // Directed output is already in (src, dst) order.
    Ok(if directed { g.mark_coalesced(true) } else { g.coalesce() })
}
