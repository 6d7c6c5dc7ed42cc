//! Seed derivation.
//!
//! Every random stream in the pipeline is seeded with
//! `derive_seed(master, role, index)`: the role string is hashed with
//! 64-bit FNV-1a, combined with the master seed and the index, and the
//! result is passed through the SplitMix64 finalizer. The function is
//! stable across platforms and releases.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, role: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ fnv1a(role)) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}
