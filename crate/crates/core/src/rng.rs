//! Seed derivation and sampling helpers.
//!
//! Every random draw in the crate comes from a ChaCha8 stream. Streams are
//! addressed by `(seed, stream id)`, so the k-th episode or k-th repeat gets
//! the same numbers no matter which thread draws it or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for a labelled purpose (repeat index, phase tag, ...).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix(mix(seed) ^ tag.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Independent stream `stream` of the generator keyed by `seed`.
pub fn substream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn seeded(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `k` distinct indices from `0..n` in random order (partial Fisher–Yates).
pub fn choose_without_replacement(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    assert!(k <= n, "cannot choose {k} of {n}");
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Purpose tags for [`derive_seed`].
pub mod tags {
    pub const REPEAT: u64 = 1;
    pub const INIT: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const DEV: u64 = 4;
    pub const TEST: u64 = 5;
    pub const SPLIT: u64 = 6;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| substream(9, 3).gen()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let b: u64 = substream(9, 4).gen();
        assert_ne!(a[0], b);
    }

    #[test]
    fn derived_seeds_differ_by_tag() {
        assert_ne!(derive_seed(1, tags::DEV), derive_seed(1, tags::TEST));
        assert_eq!(derive_seed(1, tags::DEV), derive_seed(1, tags::DEV));
    }

    #[test]
    fn choose_returns_distinct_indices() {
        let mut rng = seeded(4);
        let mut c = choose_without_replacement(&mut rng, 10, 10);
        c.sort_unstable();
        assert_eq!(c, (0..10).collect::<Vec<_>>());
    }
}
