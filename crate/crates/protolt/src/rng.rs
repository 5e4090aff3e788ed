//! Seed-splittable deterministic random streams.
//!
//! Every stochastic consumer (data generation, prototype init, shuffling)
//! derives its own stream from a root seed and a string tag, so two runs
//! that differ in one configuration knob still draw identical randomness
//! everywhere else.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive a child seed from a root seed and a stream tag.
///
/// FNV-1a over the tag bytes mixed into the root, finalized with a
/// splitmix64 scramble. Stable across platforms and releases.
pub fn derive_seed(root: u64, tag: &str) -> u64 {
    let mut h = root ^ 0xcbf2_9ce4_8422_2325;
    for byte in tag.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h)
}

/// Deterministic generator for a derived stream.
pub fn stream(root: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, tag))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_inputs_same_seed() {
        assert_eq!(derive_seed(7, "anchors"), derive_seed(7, "anchors"));
    }

    #[test]
    fn distinct_tags_distinct_seeds() {
        assert_ne!(derive_seed(7, "anchors"), derive_seed(7, "shuffle"));
        assert_ne!(derive_seed(7, "anchors"), derive_seed(8, "anchors"));
    }
}
