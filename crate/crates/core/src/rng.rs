//! Counter-keyed random streams.
//!
//! A [`SeedStream`] turns `(seed, tag, index)` into an independent ChaCha8
//! stream. Estimators key one stream per Monte Carlo sample (or per
//! trajectory), so the draws a sample sees never depend on which worker ran
//! it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags used by the estimators. Distinct tags give independent draws
/// for the same sample index.
pub mod tags {
    pub const CONDITIONAL_ENTROPY: u64 = 1;
    pub const FISHER: u64 = 2;
    pub const PAIRED_FD: u64 = 3;
    pub const BRANCH_A: u64 = 4;
    pub const BRANCH_B: u64 = 5;
    pub const FISHER_GAP: u64 = 6;
    pub const TRAJECTORY: u64 = 16;
}

#[derive(Debug, Clone)]
pub struct SeedStream {
    seed: u64,
    key: [u8; 32],
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        let key = ChaCha8Rng::seed_from_u64(seed).get_seed();
        Self { seed, key }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream for sample `index` under `tag`.
    pub fn rng(&self, tag: u64, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(splitmix64(splitmix64(tag) ^ index));
        rng
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
