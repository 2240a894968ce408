//! Seed handling.
//!
//! Every random quantity is drawn from a ChaCha8 stream identified by a
//! `(seed, index)` pair, so element-parallel work gives the same bytes no
//! matter how it is scheduled. Independent parts of one experiment get their
//! own seeds through [`child_seed`]:
//!
//! ```text
//! child_seed(master, label, index) = mix(mix(master ^ fnv1a(label)) ^ index)
//! ```
//!
//! where `fnv1a` is 64-bit FNV-1a over the UTF-8 bytes of `label` and `mix`
//! is the SplitMix64 finalizer. The formula is part of the output contract:
//! external tools can regenerate any stream from the master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for work item `index` of a computation seeded with `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn child_seed(master: u64, label: &str, index: u64) -> u64 {
    mix(mix(master ^ fnv1a(label.as_bytes())) ^ index)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
