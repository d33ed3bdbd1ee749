//! Seed derivation shared by the deterministic generators: a splitmix64
//! finalizer over the base seed and a stream tag, so independently tagged
//! streams decorrelate even for adjacent seeds.

pub(crate) fn mix(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}
