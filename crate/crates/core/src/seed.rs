//! Seed derivation.
//!
//! Each pipeline stage draws from its own stream, derived from a master seed
//! and a stage tag: `derive(master, tag, index)` hashes the tag with FNV-1a,
//! mixes it with the master seed and the index, and finalises with SplitMix64.
//! Changing one stage's consumption never shifts another stage's numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const COHORT: &str = "cohort";
pub const LABELS: &str = "labels";
pub const SPLIT: &str = "split";
pub const FOREST: &str = "forest";
pub const PERMUTATION: &str = "permutation";
pub const LOGREG: &str = "logreg";

fn fnv1a(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
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

pub fn derive(master: u64, tag: &str, index: u64) -> u64 {
    let a = splitmix64(master ^ fnv1a(tag));
    splitmix64(a ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}

pub fn rng(master: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, tag, index))
}
