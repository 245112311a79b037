//! Deterministic seed derivation.
//!
//! Every random draw in the pipeline is keyed by a tuple of integers
//! (master seed, stage tag, repetition, ...). Seeds are mixed with the
//! SplitMix64 finalizer so that adding a new key component never shifts
//! the seeds of unrelated work items.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Keyed hash of `parts` under `master`.
pub fn derive(master: u64, parts: &[u64]) -> u64 {
    let mut h = mix64(master ^ GOLDEN_GAMMA);
    for (i, &p) in parts.iter().enumerate() {
        h = mix64(h ^ mix64(p.wrapping_add(GOLDEN_GAMMA.wrapping_mul(i as u64 + 1))));
    }
    h
}

/// FNV-1a over a string, used to turn stage and algorithm names into key parts.
pub fn tag(s: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}
