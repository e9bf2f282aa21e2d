//! Reproducible random streams: one root seed, one ChaCha stream per path.
//!
//! Path `i` draws from stream `i` of the generator keyed by the root seed, so
//! its normals do not depend on how paths are spread over worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Fills `out` with standard normals from the stream of `path`.
pub fn fill_normals(seed: u64, path: u64, out: &mut [f64]) {
    let mut rng = path_rng(seed, path);
    for z in out.iter_mut() {
        *z = StandardNormal.sample(&mut rng);
    }
}

/// Normals into `z`, then unit exponentials into `e`, from the stream of `path`.
///
/// The normals are the same as those of [`fill_normals`].
pub fn fill_normals_exp(seed: u64, path: u64, z: &mut [f64], e: &mut [f64]) {
    let mut rng = path_rng(seed, path);
    for x in z.iter_mut() {
        *x = StandardNormal.sample(&mut rng);
    }
    for x in e.iter_mut() {
        *x = Exp1.sample(&mut rng);
    }
}

/// Derives an independent root seed, e.g. for a second estimator run.
pub fn split_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
