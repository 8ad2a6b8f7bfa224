//! Deterministic RNG derivation.
//!
//! Every random decision in the crate draws from a ChaCha8 generator keyed by
//! a user seed and a purpose-specific stream, so independent consumers never
//! share a sequence and results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub enum Stream {
    Split,
    Covariates,
    LabelDraws,
    Resample,
    Smote,
    Rose,
    Bootstrap,
    FeatureSampling,
    Folds,
    Permutation,
    Fit,
}

impl Stream {
    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

pub fn rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream.tag() << 32);
    r
}

/// Generator for the `index`-th member of a family (tree, fold, grid cell).
pub fn rng_indexed(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream((stream.tag() << 32) | (index & 0xffff_ffff));
    r
}

/// Mixes a child seed out of a parent seed and an index (splitmix64 finalizer).
pub fn derive(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
