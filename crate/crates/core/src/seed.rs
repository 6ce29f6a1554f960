//! Seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded from a root
//! seed and a task identifier: `splitmix64(root ^ fnv1a64(task_id))`. Tasks
//! that run in parallel get distinct identifiers, so results do not depend on
//! scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed for the task `task_id` under `root`.
pub fn derive_seed(root: u64, task_id: &str) -> u64 {
    splitmix64(root ^ fnv1a64(task_id.as_bytes()))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn task_rng(root: u64, task_id: &str) -> Rng {
    rng_from_seed(derive_seed(root, task_id))
}
