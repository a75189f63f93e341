//! Seed derivation and generator construction.
//!
//! Every stochastic operation takes an explicit seed. Replays are bit-exact:
//! the generator is ChaCha8 (portable, word-based) and all derived seeds come
//! from one documented SplitMix64 chain, so (master seed, split index, init
//! index) fully determines a run.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One SplitMix64 step; the standard finalizer constants.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `(master, tag, index)`.
///
/// `tag` separates independent streams (splits vs inits vs dropout) so that
/// equal indices in different roles never collide.
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    let mut state = master;
    let a = splitmix64(&mut state);
    let mut state = a ^ tag.wrapping_mul(0xA24BAED4963EE407);
    let b = splitmix64(&mut state);
    let mut state = b ^ index.wrapping_mul(0x9FB21C651E98DF25);
    splitmix64(&mut state)
}

/// Stream tags used by the training protocol.
pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const INIT: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const MC_PATHS: u64 = 4;
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
