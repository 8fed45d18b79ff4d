//! Small deterministic 64-bit mixers. These are fixed constants of the wire
//! behavior: the same config must reproduce the same corpus on any platform.

pub const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a_bytes(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn mix2(a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(a).wrapping_add(b))
}

pub fn mix3(a: u64, b: u64, c: u64) -> u64 {
    splitmix64(mix2(a, b).wrapping_add(splitmix64(c)))
}

/// Maps a hash to [0, 1).
pub fn to_unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}
