//! Baseline factories: Von Neumann's fair bit and a known-probability coin.

use serde::Serialize;

use crate::coin::CoinSource;
use crate::error::{Error, Result};
use crate::randomness::UniformSource;

/// Default cap on flips for [`von_neumann`].
pub const VON_NEUMANN_MAX_FLIPS: u64 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct VonNeumannResult {
    pub bit: bool,
    /// Always even.
    pub flips: u64,
}

/// Flip the coin in pairs until the two flips differ; return 1 for `(0, 1)`
/// and 0 for `(1, 0)`. The output is a fair bit for any `p` in `(0, 1)`.
///
/// With `max_flips = Some(limit)` the run gives up once another pair would
/// exceed `limit` flips.
pub fn von_neumann<C: CoinSource + ?Sized>(
    coin: &mut C,
    max_flips: Option<u64>,
) -> Result<VonNeumannResult> {
    let mut flips = 0u64;
    loop {
        if let Some(limit) = max_flips {
            if flips + 2 > limit {
                return Err(Error::NonTermination {
                    what: "Von Neumann flips",
                    limit,
                });
            }
        }
        let first = coin.flip()?;
        let second = coin.flip()?;
        flips += 2;
        if first != second {
            return Ok(VonNeumannResult { bit: second, flips });
        }
    }
}

/// A Bernoulli(q) draw for known `q`; flips no coin.
pub fn known_q_factory(src: &mut UniformSource, q: f64) -> Result<bool> {
    src.bernoulli_known(q)
}
