//! Deterministic random stream derivation.
//!
//! Every random decision in the pipeline draws from a [`ChaCha8Rng`] whose
//! seed is derived from a master seed and a path of integer indices
//! (tree index, cell index, replication index, ...). The derivation is a
//! SplitMix64 chain:
//!
//! ```text
//! state = master
//! for each index p in path:
//!     state = splitmix64(state ^ splitmix64(p + 0x9E3779B97F4A7C15))
//! ```
//!
//! The resulting `u64` seeds `ChaCha8Rng::seed_from_u64`. Because each stream
//! depends only on `(master, path)`, results do not depend on how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 finalization step.
#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a stream seed from a master seed and an index path.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(master, |state, &p| {
        splitmix64(state ^ splitmix64(p.wrapping_add(GOLDEN)))
    })
}

/// A ChaCha8 generator for the stream at `path` under `master`.
pub fn stream(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}
