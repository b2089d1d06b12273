//! Seeding conventions.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha`), whose
//! output is specified independently of platform and word size. Replicate `r`
//! of a study with base seed `s` uses seed `s + r` (wrapping). Separate
//! purposes within one replicate (data generation, bootstrap resampling, the
//! large-sample reference draw) use distinct ChaCha streams of the same seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream used for simulated datasets.
pub const DATA_STREAM: u64 = 0;
/// Stream used for bootstrap resampling.
pub const BOOTSTRAP_STREAM: u64 = 1;
/// Stream used for Monte Carlo ground truth.
pub const TRUTH_STREAM: u64 = 2;

pub fn replicate_seed(base_seed: u64, replicate: u64) -> u64 {
    base_seed.wrapping_add(replicate)
}

pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
