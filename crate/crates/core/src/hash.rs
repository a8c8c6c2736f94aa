//! Deterministic 64-bit hashing used for fingerprints and kernel feature keys.
//! Stable across platforms and toolchain versions, unlike `std`'s `DefaultHasher`.

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive combination of two hashes.
#[inline]
pub fn mix(a: u64, b: u64) -> u64 {
    splitmix(a.rotate_left(17) ^ splitmix(b))
}

/// Hash of a multiset: sorts, then folds in order.
pub fn hash_sorted(mut items: Vec<u64>) -> u64 {
    items.sort_unstable();
    items
        .into_iter()
        .fold(mix(0x5eed, 0), mix)
}
