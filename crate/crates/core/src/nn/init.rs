use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{Scalar, Tensor};

/// He-uniform initialization: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, deterministic
/// per seed.
pub fn seeded_init<F: Scalar>(shape: &[usize], fan_in: usize, seed: u64) -> Tensor<F> {
    let limit = (6.0 / fan_in.max(1) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| F::from_f64(rng.gen_range(-limit..limit)))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("init shape")
}
