//! Seed fan-out: one root seed reproduces a whole run.
//!
//! Sub-seeds are derived as `splitmix64(root ^ fnv1a64(label))`, so each
//! named random stream (parameter init, epoch shuffling, data synthesis)
//! gets an independent, documented seed. All generators in this crate are
//! ChaCha8 instances built from such seeds, which makes every output
//! deterministic across platforms for a fixed root seed.

/// Derives the sub-seed for a named random stream.
pub fn derive_seed(root: u64, stream: &str) -> u64 {
    splitmix64(root ^ fnv1a64(stream.as_bytes()))
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
