use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Zero-mean normal draws with standard deviation `sqrt(2 / fan_in)`.
pub fn kaiming_init(dims: &[usize], fan_in: usize, seed: u64) -> Result<Tensor> {
    if fan_in == 0 {
        return Err(Error::param("kaiming init needs fan_in > 0"));
    }
    let std = (2.0 / fan_in as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Tensor::from_fn(dims, |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        std * z
    }))
}
