//! Seeded random streams.
//!
//! Every random draw comes from ChaCha8 keyed by the 64-bit run seed, with the
//! 64-bit stream id selecting an independent substream and the block counter
//! advancing within it. The keystream is specified bit-for-bit, so datasets and
//! initializations reproduce across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as StreamRng;

/// Substream ids used across the crate.
pub mod streams {
    pub const INIT_C2: u64 = 0x1000;
    pub const INIT_PERTURB: u64 = 0x1001;
    pub const SHUFFLE: u64 = 0x2000;
    pub const TRAJECTORY_BASE: u64 = 0x1_0000_0000;
    pub const MONTE_CARLO_BASE: u64 = 0x2_0000_0000;
}

pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Uniform draw on `[lo, hi)`.
pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}
