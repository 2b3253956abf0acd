//! Seeded randomness. Every agent draws from its own ChaCha stream so that a
//! unilateral deviation never shifts the draws of anyone else.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::network::NodeIx;

/// Stream for buyer `node`'s parent choice in bottom-up aggregation.
pub fn parent_choice_rng(seed: u64, node: NodeIx) -> ChaCha8Rng {
    stream(seed, 2 * node as u64)
}

/// Stream for tie-breaking in the local auction hosted by `node`.
pub fn auction_rng(seed: u64, node: NodeIx) -> ChaCha8Rng {
    stream(seed, 2 * node as u64 + 1)
}

/// Generic stream for mechanism-level draws (tree sampling, top bidder).
pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Derives the `index`-th child seed of a master seed (SplitMix64 finalizer).
pub fn child_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
