//! Seed derivation. Every frame gets its own seed from the master seed and
//! its id, and every stage its own ChaCha8 stream of that seed, so results
//! never depend on which worker handles a frame or in what order.
//!
//! ```text
//! frame_seed = splitmix64(master_seed XOR fnv1a64(frame_id))
//! stage rng  = ChaCha8Rng::seed_from_u64(frame_seed), stream = stage index
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Sample = 0,
    Place = 1,
    Global = 2,
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn frame_seed(master: u64, frame_id: &str) -> u64 {
    splitmix64(master ^ fnv1a64(frame_id.as_bytes()))
}

pub fn stage_rng(frame_seed: u64, stage: Stage) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(frame_seed);
    rng.set_stream(stage as u64);
    rng
}
