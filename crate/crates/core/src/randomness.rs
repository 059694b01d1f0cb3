//! Auxiliary randomness: uniform variates, Bernoulli draws with a known
//! probability, and geometric variates.
//!
//! Every draw comes from a [`UniformSource`], a ChaCha8 stream keyed by a
//! 64-bit seed and selected by a 64-bit stream id. Two sources built from the
//! same [`RandomSeed`] produce the same sequence of variates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Stream ids with this bit set are reserved for simulated coins, so the coin
/// of replicate `r` never shares a stream with the auxiliary source of any
/// replicate.
const COIN_STREAM_BIT: u64 = 1 << 63;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RandomSeed {
    pub seed: u64,
    pub stream_id: u64,
}

impl RandomSeed {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RandomSeed { seed, stream_id }
    }

    /// The seed used for the simulated coin paired with this auxiliary stream.
    pub fn coin_stream(self) -> Self {
        RandomSeed {
            seed: self.seed,
            stream_id: self.stream_id | COIN_STREAM_BIT,
        }
    }
}

#[derive(Clone, Debug)]
pub struct UniformSource {
    rng: ChaCha8Rng,
    draws_made: u64,
}

impl UniformSource {
    pub fn new(seed: RandomSeed) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.seed);
        rng.set_stream(seed.stream_id);
        UniformSource { rng, draws_made: 0 }
    }

    pub fn draws_made(&self) -> u64 {
        self.draws_made
    }

    /// A uniform variate in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        self.draws_made += 1;
        self.rng.random::<f64>()
    }

    /// Returns `true` with probability `q`. Consumes exactly one uniform.
    pub fn bernoulli_known(&mut self, q: f64) -> Result<bool> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::domain(format!("Bernoulli probability {q} not in [0, 1]")));
        }
        Ok(self.next_uniform() < q)
    }

    /// A geometric variate on `{1, 2, ...}` with `P(G = g) = (1 - a)^(g - 1) a`,
    /// drawn by inversion from a single uniform.
    pub fn geometric(&mut self, a: f64) -> Result<u64> {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::domain(format!("geometric parameter {a} not in (0, 1]")));
        }
        Ok(self.geometric_with_log_ratio((-a).ln_1p()))
    }

    /// Geometric draw given `log_q = ln(1 - a)`; `log_q = -inf` means `a = 1`.
    #[inline]
    pub(crate) fn geometric_with_log_ratio(&mut self, log_q: f64) -> u64 {
        let u = self.next_uniform();
        if log_q == f64::NEG_INFINITY {
            return 1;
        }
        geometric_from_uniform(u, log_q, || self.next_uniform())
    }
}

/// Inversion `1 + floor(ln(1 - u) / ln(1 - a))`, with `log_q = ln(1 - a) < 0`.
/// `redraw` supplies a fresh uniform if `1 - u` rounds to zero.
#[inline]
fn geometric_from_uniform(mut u: f64, log_q: f64, mut redraw: impl FnMut() -> f64) -> u64 {
    while 1.0 - u == 0.0 {
        u = redraw();
    }
    let g = ((-u).ln_1p() / log_q).floor();
    // `as` saturates, so an astronomically large draw pins at u64::MAX.
    1 + g as u64
}
