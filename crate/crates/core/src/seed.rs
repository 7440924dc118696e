//! Deterministic seed derivation.
//!
//! Every random stream in a run is keyed by `(master seed, purpose tag, index)`,
//! so any member, batch schedule or bootstrap replicate can be replayed on its
//! own without running whatever came before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used for all seeded streams.
pub type SeededRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn tag_hash(tag: &str) -> u64 {
    // FNV-1a
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Derives a child seed for `(tag, index)` under `master`.
pub fn derive(master: u64, tag: &str, index: u64) -> u64 {
    let a = splitmix64(master ^ tag_hash(tag));
    splitmix64(a ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// A generator for the stream `(tag, index)` under `master`.
pub fn rng(master: u64, tag: &str, index: u64) -> SeededRng {
    SeededRng::seed_from_u64(derive(master, tag, index))
}

/// Stateless uniform draw in `[-1, 1)` addressed by coordinates; used where a
/// value must not depend on iteration order.
pub(crate) fn hashed_unit(seed: u64, a: u64, b: u64) -> f64 {
    let h = splitmix64(splitmix64(seed ^ splitmix64(a)) ^ b.wrapping_mul(0xd605_bbb5_8c8a_bbcd));
    ((h >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
}
