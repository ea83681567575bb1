//! Counter-based random streams.
//!
//! Every random draw is addressed by `(seed, index)`: the ChaCha key comes from
//! the seed and the stream id from the index, so a worker can regenerate the
//! draws for any index range without coordinating with other workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

/// Independent stream `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derive a child seed from a parent seed and a path of tags
/// (e.g. `[epoch, step]`). SplitMix64 finaliser per tag.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut s = seed ^ 0x9E37_79B9_7F4A_7C15;
    for &t in tags {
        s = splitmix(s ^ splitmix(t.wrapping_add(0xD1B5_4A32_D192_ED03)));
    }
    s
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| gaussian(rng)).collect()
}

/// Uniform draw in `[0, 1)`.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}
