//! Counter-style RNG derivation: every (seed, tag...) tuple maps to an
//! independent stream, so shuffles and per-sample augmentations are
//! reproducible regardless of iteration or thread order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub(crate) fn derive_rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut s = splitmix64(seed);
    for &t in tags {
        s = splitmix64(s ^ t.wrapping_mul(0xd134_2543_de82_ef95));
    }
    ChaCha8Rng::seed_from_u64(s)
}

/// Stable content hash (independent of `std`'s hasher internals).
pub(crate) fn stable_hash(bytes: &[u8]) -> u64 {
    let mut s = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        s = splitmix64(s ^ b as u64);
    }
    s
}
