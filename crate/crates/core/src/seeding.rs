//! Deterministic seed derivation.
//!
//! Every random stream in the pipeline (fold shuffling, weight init,
//! dropout, bootstrap resampling, cohort simulation) is derived from one
//! master seed plus a stream label and index. Derivation is a pure
//! function, so re-running with the same master seed reproduces every
//! stream bit-for-bit regardless of thread count or evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step; decorrelates nearby seed inputs.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` for the stream named `label`
/// at position `index`. Distinct labels and indices give decorrelated
/// child seeds.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h = splitmix64(master);
    for &b in label.as_bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    splitmix64(h ^ index)
}

/// Builds the RNG for a derived stream.
pub fn stream_rng(master: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label, index))
}
