//! Reproducible random streams.
//!
//! Each Monte Carlo unit (a path, a replicate, a sample) draws from its own
//! ChaCha8 stream selected by `(seed, index, substream)`. Within a stream the
//! step index is the draw order, so results do not depend on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use rand_chacha::ChaCha8Rng as StreamRng;

/// Identifier embedded in every output artifact.
pub const RNG_SCHEME: &str = "chacha8/seed-u64/stream=(index<<2|substream)";

/// Independent noise sources attached to one Monte Carlo index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Substream {
    /// Driving Brownian motion on the Lie algebra.
    Rotation = 0,
    /// The Gaussian process B̄.
    Bbar = 1,
    /// Draws of the initial condition.
    Initial = 2,
    /// Anything else (Haar samples, particle noise).
    Aux = 3,
}

pub fn stream(seed: u64, index: u64, sub: Substream) -> ChaCha8Rng {
    assert!(index < (1u64 << 62), "stream index overflow");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((index << 2) | sub as u64);
    rng
}

#[inline]
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}
