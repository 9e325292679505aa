//! Derived random streams.
//!
//! Every stochastic step draws from a [`Stream`] that is a pure function of
//! the master seed and a path of indices (replicate, arm, tree, feature, ...).
//! Work items therefore never share generator state, and results do not depend
//! on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Stream(u64);

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream(splitmix64(seed))
    }

    /// Independent sub-stream number `index`.
    pub fn child(self, index: u64) -> Self {
        let h = splitmix64(index ^ 0xD6E8_FEB8_6659_FD93);
        Stream(splitmix64(self.0.rotate_left(17) ^ h).wrapping_add(self.0))
    }

    /// Sub-stream addressed by a path of indices.
    pub fn path(self, indices: &[u64]) -> Self {
        indices.iter().fold(self, |s, &i| s.child(i))
    }

    pub fn key(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}
