use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random stream `stream` under a user seed.
///
/// ChaCha is counter based, so every stream can be generated on any thread
/// in any order and still produce the same numbers.
pub(crate) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
