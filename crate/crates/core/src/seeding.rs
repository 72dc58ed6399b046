//! Deterministic derivation of RNG seeds from a base seed and context labels,
//! stable across platforms and runs (unlike hasher-randomized std hashing).

/// splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Fold `parts` into `base`, one mixing round per part.
pub(crate) fn mix_seed(base: u64, parts: &[u64]) -> u64 {
    let mut state = mix64(base);
    for &p in parts {
        state = mix64(state ^ p.wrapping_mul(0x9e3779b97f4a7c15));
    }
    state
}

/// FNV-1a of a string, for folding names into seeds.
pub(crate) fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
