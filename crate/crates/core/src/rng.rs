//! The one random generator used throughout: ChaCha8 seeded from a `u64`.
//!
//! ChaCha8's output stream is fixed by its algorithm, so a seed reproduces
//! the same shuffles, splits and initializations on every platform.

use rand::{Rng, SeedableRng};

pub type Rng64 = rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng64 {
    Rng64::seed_from_u64(seed)
}

/// Independent stream derived from a base seed. Used where a subsystem
/// must not perturb another subsystem's random sequence.
pub fn stream(seed: u64, stream: u64) -> Rng64 {
    let mut rng = Rng64::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw in `[-scale, scale)`.
#[inline]
pub fn uniform_symmetric(rng: &mut Rng64, scale: f64) -> f64 {
    rng.gen_range(-scale..scale)
}
