//! Estimating `p` from Bernoulli(Cp) draws: run the factory until it has
//! produced four ones, and report `4 / (C A)` where `A` is the number of
//! factory calls. For `p` at the edge of the factory contract the estimate is
//! within relative error `sqrt(eps)` with probability at least 3/4.

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{theorem4_bound, BoundInputs};
use crate::coin::CoinSource;
use crate::error::{Error, Result};
use crate::factory::{replicate_seed, sample, FactoryParams};
use crate::randomness::{RandomSeed, UniformSource};
use crate::stats::FlipStats;

/// Successes the estimator waits for.
pub const TARGET_SUCCESSES: u64 = 4;
pub const DEFAULT_MAX_DRAWS: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub p_hat: f64,
    /// Factory calls made; negative binomial with 4 successes.
    pub draws: u64,
    pub total_flips: u64,
}

impl EstimateRecord {
    /// Whether `p_hat` lies in `[p (1 - sqrt(eps)), p (1 + sqrt(eps))]`.
    pub fn covers(&self, p: f64, eps: f64) -> bool {
        let half = eps.sqrt();
        self.p_hat >= p * (1.0 - half) && self.p_hat <= p * (1.0 + half)
    }
}

pub fn estimate_p<C: CoinSource + ?Sized>(
    params: &FactoryParams,
    coin: &mut C,
    aux: &mut UniformSource,
    max_draws: Option<u64>,
) -> Result<EstimateRecord> {
    let mut draws = 0u64;
    let mut successes = 0u64;
    let mut total_flips = 0u64;
    while successes < TARGET_SUCCESSES {
        if let Some(limit) = max_draws {
            if draws >= limit {
                return Err(Error::NonTermination {
                    what: "estimator factory calls",
                    limit,
                });
            }
        }
        let rec = sample(params, coin, aux)?;
        draws += 1;
        successes += rec.output as u64;
        total_flips += rec.flips;
    }
    Ok(EstimateRecord {
        p_hat: TARGET_SUCCESSES as f64 / (params.c * draws as f64),
        draws,
        total_flips,
    })
}

/// Per-call flip cost used by [`expected_flip_cost`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PerCallCost {
    /// A measured mean flips per factory call.
    Measured(f64),
    /// The precise running-time bound at `p`.
    Bound,
}

/// Expected coin flips for one estimate: `4 / (C p)` factory calls times the
/// per-call cost.
pub fn expected_flip_cost(params: &FactoryParams, p: f64, per_call: PerCallCost) -> Result<f64> {
    let cp = params.c * p;
    if !(p > 0.0) || cp > 1.0 - params.eps + 1e-12 {
        return Err(Error::domain(format!(
            "need 0 < Cp <= 1 - eps, got Cp = {cp}"
        )));
    }
    let calls = TARGET_SUCCESSES as f64 / cp;
    let cost = match per_call {
        PerCallCost::Measured(m) => m,
        PerCallCost::Bound => theorem4_bound(&BoundInputs::from(params), p)?,
    };
    Ok(calls * cost)
}

/// Run `n` independent estimates, one coin and auxiliary stream per
/// replicate, returned in replicate order.
pub fn estimate_many<K, F>(
    params: &FactoryParams,
    base: RandomSeed,
    n: u64,
    max_draws: Option<u64>,
    make_coin: F,
) -> Result<Vec<EstimateRecord>>
where
    K: CoinSource,
    F: Fn(RandomSeed) -> Result<K> + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|r| {
            let seed = replicate_seed(base, r);
            let mut coin = make_coin(seed)?;
            let mut aux = UniformSource::new(seed);
            estimate_p(params, &mut coin, &mut aux, max_draws)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EstimateSummary {
    pub n: u64,
    pub mean_p_hat: f64,
    pub draws: FlipStats,
    pub total_flips: FlipStats,
    /// Fraction of estimates within relative error `sqrt(eps)`, when `p` is
    /// known.
    pub coverage: Option<f64>,
}

impl EstimateSummary {
    pub fn new(records: &[EstimateRecord], known: Option<(f64, f64)>) -> Self {
        let n = records.len() as u64;
        let mean_p_hat = records.iter().map(|r| r.p_hat).sum::<f64>() / n.max(1) as f64;
        let coverage = known.map(|(p, eps)| {
            records.iter().filter(|r| r.covers(p, eps)).count() as f64 / n.max(1) as f64
        });
        EstimateSummary {
            n,
            mean_p_hat,
            draws: records.iter().map(|r| r.draws).collect(),
            total_flips: records.iter().map(|r| r.total_flips).collect(),
            coverage,
        }
    }
}
