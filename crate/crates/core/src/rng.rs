//! Counter-based random streams.
//!
//! Every consumer (ensemble member, bootstrap replicate) gets its own ChaCha
//! stream selected by `(seed, index)`. Draws therefore never depend on the
//! order in which indices are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Independent generator for stream `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
