//! Deterministic stream-split random number generation.
//!
//! Every random decision in a run draws from its own ChaCha8 stream, derived
//! from the run seed through a documented chain so that results do not depend
//! on scheduling or worker count. The derivation is:
//!
//! 1. `fnv1a64(s)` — FNV-1a over the UTF-8 bytes of a string, offset basis
//!    `0xcbf29ce484222325`, prime `0x100000001b3`.
//! 2. `splitmix64(z)` — the SplitMix64 finalizer: add `0x9e3779b97f4a7c15`,
//!    then `z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9`,
//!    `z = (z ^ (z >> 27)) * 0x94d049bb133111eb`, `z ^ (z >> 31)`.
//! 3. `child_seed(parent, tag, index) =
//!        splitmix64(splitmix64(parent ^ ((tag as u64) << 56)) ^ index)`.
//! 4. A stream is `ChaCha8Rng::seed_from_u64(seed)`.
//!
//! Seeds are split hierarchically: run seed → prompt seed (index =
//! `fnv1a64(prompt_id)`) → generation seed → one seed per operation
//! (initialization, tournament, crossover request, annealing run, refinement
//! request, acceptance draw, per-sample stream inside the simulated backend).
//! Uniform doubles are produced as `(next_u64() >> 11) * 2^-53`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tags naming each derivation edge in the seed tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum StreamTag {
    Prompt = 1,
    Generation = 2,
    Init = 3,
    Select = 4,
    Crossover = 5,
    Anneal = 6,
    Refine = 7,
    Accept = 8,
    Sample = 9,
    Redraw = 10,
}

pub fn fnv1a64(s: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in s.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

pub fn splitmix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `parent` along edge `(tag, index)`.
pub fn child_seed(parent: u64, tag: StreamTag, index: u64) -> u64 {
    splitmix64(splitmix64(parent ^ ((tag as u64) << 56)) ^ index)
}

/// The ChaCha8 stream for a derived seed.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_for(parent: u64, tag: StreamTag, index: u64) -> ChaCha8Rng {
    stream(child_seed(parent, tag, index))
}

/// Uniform draw in [0, 1) with exactly 53 random mantissa bits.
pub fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform index in `0..len` via modulo reduction.
///
/// Slightly biased for `len` not dividing 2^32; acceptable here because the
/// reproducibility contract matters more than perfect uniformity and `len`
/// stays tiny (alphabet sizes, population sizes).
pub fn index(rng: &mut impl RngCore, len: usize) -> usize {
    debug_assert!(len > 0);
    (rng.next_u32() as usize) % len
}
