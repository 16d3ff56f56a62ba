//! Keyed random streams. Every replicate of every experiment row draws from
//! its own ChaCha8 stream, selected by `(seed, row, replicate)`, so results
//! do not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A position in the key space of random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub row: u32,
}

impl StreamKey {
    pub fn new(seed: u64, row: u32) -> Self {
        Self { seed, row }
    }

    /// The generator for replicate `rep` of this row.
    pub fn replicate(&self, rep: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((self.row as u64) << 32) | rep as u64);
        rng
    }
}
