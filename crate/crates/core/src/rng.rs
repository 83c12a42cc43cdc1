//! Seed handling for reproducible experiments.
//!
//! Every randomized routine takes a `u64` seed and derives an independent
//! ChaCha stream per replicate, so results do not depend on scheduling order.

use rand_chacha::ChaCha8Rng;

use rand::SeedableRng;

/// RNG for `(seed, stream)`. Distinct streams are statistically independent.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
