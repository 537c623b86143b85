use rand::Rng;

use crate::tensor::Tensor;

/// Glorot/Xavier uniform initialisation on `[-s, s]`, `s = sqrt(6 / (rows + cols))`.
pub fn glorot_init<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let s = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-s..=s)).collect();
    Tensor::new(rows, cols, data).expect("glorot shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bounds_and_determinism() {
        let bound = (6.0f64 / 30.0).sqrt();
        let a = glorot_init(10, 20, &mut ChaCha8Rng::seed_from_u64(1));
        let b = glorot_init(10, 20, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn variance_matches_two_over_fan_sum() {
        let t = glorot_init(100, 100, &mut ChaCha8Rng::seed_from_u64(7));
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let expected = 2.0 / 200.0;
        assert!((var - expected).abs() / expected < 0.1, "variance {var}");
    }
}
