//! Seeded random streams.
//!
//! Every stochastic stage of the pipeline draws from its own ChaCha8 stream.
//! ChaCha is counter based: a 64-bit seed selects the key and a 64-bit stream
//! id selects an independent keystream, so stages never share state and each
//! one can be replayed on its own.
//!
//! Stream ids are laid out as `(stage << 48) | index`, where `index` is a
//! stage-local counter (epoch number, repetition number, ...).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Pipeline stages that consume randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum Stage {
    ItemBank = 1,
    ItemText = 2,
    Students = 3,
    Responses = 4,
    StudentSplit = 5,
    ItemSplit = 6,
    TextShuffle = 7,
    Init = 8,
    TrainEpoch = 9,
    Validation = 10,
    EvalRepetition = 11,
    GridProbe = 12,
    LatentSamples = 13,
}

const INDEX_BITS: u32 = 48;

/// Returns the generator for `(seed, stage, index)`.
pub fn stream(seed: u64, stage: Stage, index: u64) -> ChaCha8Rng {
    debug_assert!(index < (1 << INDEX_BITS));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stage as u64) << INDEX_BITS) | (index & ((1 << INDEX_BITS) - 1)));
    rng
}

/// Mixes several words into one, for deterministic per-key generators.
pub fn mix(words: &[u64]) -> u64 {
    // splitmix64 finalizer folded over the inputs
    let mut acc: u64 = 0x9E37_79B9_7F4A_7C15;
    for &w in words {
        let mut z = acc ^ w.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        acc = z ^ (z >> 31);
    }
    acc
}
