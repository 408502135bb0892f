use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for `seed`, on an independent ChaCha stream per `stream`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
