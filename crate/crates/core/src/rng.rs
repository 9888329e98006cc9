//! Reproducible random streams: one independent ChaCha stream per run,
//! addressed by `(master seed, run index)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream for run `run_index` under `master_seed`. Streams for different
/// indices never overlap, so runs can execute on any worker in any order.
pub fn run_stream(master_seed: u64, run_index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(run_index);
    rng
}
