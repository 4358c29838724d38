use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Every stochastic routine draws from this generator so outputs are
/// reproducible across platforms for a given seed.
pub(crate) type Rng = ChaCha8Rng;

pub(crate) fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream from a base seed and a label.
pub(crate) fn derived(seed: u64, stream: u64) -> Rng {
    let mut rng = seeded(seed);
    rng.set_stream(stream);
    rng
}
