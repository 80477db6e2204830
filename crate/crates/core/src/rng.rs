//! Reproducible random substreams.
//!
//! Every Monte Carlo draw comes from a ChaCha8 stream keyed by
//! `(master seed, purpose tag)` and selected by a 64-bit stream id
//! (usually the sample index). ChaCha is counter based, so the draws of
//! sample `k` never depend on which thread produced them or on how many
//! other samples were drawn before.
//!
//! Key derivation: `key = splitmix64(master ^ splitmix64(tag))`, expanded
//! to 256 bits by `seed_from_u64`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// One step of the SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Factory for independent substreams under one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    key: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self { key: master }
    }

    /// A child tree for a named purpose; children with different tags are
    /// statistically independent.
    pub fn child(&self, tag: u64) -> Self {
        Self {
            key: splitmix64(self.key ^ splitmix64(tag)),
        }
    }

    pub fn stream(&self, id: u64) -> Stream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.key);
        rng.set_stream(id);
        rng
    }
}
