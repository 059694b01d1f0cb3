//! The linear Bernoulli factory: one Bernoulli(Cp) bit from flips of a
//! Bernoulli(p) coin, for `C > 1` and `Cp <= 1 - eps`.
//!
//! The sampler tracks an exponent `i` such that the bit still to be produced
//! is a `(C_j p)^i` coin. Each step flips the p-coin once: heads lowers `i` by
//! one, tails raises it by `G - 1` with `G ~ Geo((C_j - 1) / C_j)`. Reaching
//! `i = 0` means success. When `i` climbs to the stage threshold `k_j`, a
//! known-probability coin `(1 + gamma eps_j)^(-i)` either ends the run with a
//! 0 or moves to the next stage, where `C_j` grows by `(1 + gamma eps_j)`,
//! the slack `eps_j` shrinks by `(1 - gamma)` and the threshold grows by
//! `1 / (1 - gamma)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::coin::CoinSource;
use crate::error::{Error, Result};
use crate::randomness::{RandomSeed, UniformSource};
use crate::stats::FlipStats;

/// Largest slack the sampler uses; larger requests are clamped to it.
pub const EPS_CLAMP: f64 = 0.644;
pub const DEFAULT_GAMMA: f64 = 0.5;
pub const DEFAULT_M: f64 = 2.3;

/// Below this the per-stage slack is treated as lost to underflow.
const EPS_UNDERFLOW: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ParamWarning {
    /// `r >= 1`: the running-time bound is infinite, though the sampler is
    /// still exact.
    InfeasibleBound { r: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FactoryParams {
    pub c: f64,
    /// Slack after clamping to [`EPS_CLAMP`].
    pub eps: f64,
    pub gamma: f64,
    pub m: f64,
    /// First-stage threshold, `m / (gamma eps)`.
    pub k: f64,
    pub warning: Option<ParamWarning>,
}

/// `exp(-k eps gamma) (1 - gamma)^-2`; the running-time bound is finite iff
/// this is below 1.
pub fn ratio_r(eps: f64, gamma: f64, k: f64) -> f64 {
    (-k * eps * gamma).exp() / ((1.0 - gamma) * (1.0 - gamma))
}

fn check_c_eps(c: f64, eps: f64) -> Result<()> {
    if !(c > 1.0) || !c.is_finite() {
        return Err(Error::domain(format!("C = {c} must be a finite number above 1")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain(format!("eps = {eps} must lie in (0, 1)")));
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::domain(format!("gamma = {gamma} must lie in (0, 1)")));
    }
    Ok(())
}

/// Build parameters for target `C` and slack `eps`.
///
/// `gamma` defaults to 1/2 and `m` to 2.3; `k` is always derived from the
/// clamped `eps`, so the defaults give `k = 4.6 / eps`.
pub fn make_params(c: f64, eps: f64, gamma: Option<f64>, m: Option<f64>) -> Result<FactoryParams> {
    check_c_eps(c, eps)?;
    let gamma = gamma.unwrap_or(DEFAULT_GAMMA);
    check_gamma(gamma)?;
    let m = m.unwrap_or(DEFAULT_M);
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::domain(format!("m = {m} must be positive")));
    }
    let eps = eps.min(EPS_CLAMP);
    let k = m / (gamma * eps);
    Ok(FactoryParams::assemble(c, eps, gamma, m, k))
}

impl FactoryParams {
    /// Parameters given an explicit threshold `k` rather than `m`.
    pub fn with_k(c: f64, eps: f64, gamma: f64, k: f64) -> Result<Self> {
        check_c_eps(c, eps)?;
        check_gamma(gamma)?;
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::domain(format!("k = {k} must be positive")));
        }
        let eps = eps.min(EPS_CLAMP);
        Ok(FactoryParams::assemble(c, eps, gamma, k * gamma * eps, k))
    }

    fn assemble(c: f64, eps: f64, gamma: f64, m: f64, k: f64) -> Self {
        let r = ratio_r(eps, gamma, k);
        let warning = (r >= 1.0).then_some(ParamWarning::InfeasibleBound { r });
        FactoryParams {
            c,
            eps,
            gamma,
            m,
            k,
            warning,
        }
    }

    pub fn r(&self) -> f64 {
        ratio_r(self.eps, self.gamma, self.k)
    }

    /// Largest `p` the factory contract allows: `(1 - eps) / C`.
    pub fn max_p(&self) -> f64 {
        (1.0 - self.eps) / self.c
    }
}

/// Live state of a run: the exponent `i` and the current stage's
/// `(C_j, eps_j, k_j)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StageState {
    pub i: u64,
    /// Stage index, starting at 1.
    pub j: u64,
    pub c: f64,
    pub eps: f64,
    pub k: f64,
}

impl StageState {
    pub fn initial(params: &FactoryParams) -> Self {
        StageState {
            i: 1,
            j: 1,
            c: params.c,
            eps: params.eps,
            k: params.k,
        }
    }

    /// Move to the next stage. `i` is left unchanged.
    pub fn advance(&mut self, gamma: f64) {
        self.c *= 1.0 + gamma * self.eps;
        self.eps *= 1.0 - gamma;
        self.k /= 1.0 - gamma;
        self.j += 1;
    }

    /// `ln(1 - a)` for the tails geometric `Geo(a)`, `a = (C_j - 1) / C_j`.
    fn log_tail_ratio(&self) -> f64 {
        (-(self.c - 1.0) / self.c).ln_1p()
    }

    fn at_threshold(&self) -> bool {
        self.i as f64 >= self.k
    }
}

/// Natural log of the stage-gate probability `(1 + gamma eps_j)^(-i)`.
pub fn gate_log_probability(i: u64, gamma: f64, eps_j: f64) -> f64 {
    -(i as f64) * (gamma * eps_j).ln_1p()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RunRecord {
    pub output: bool,
    pub flips: u64,
    pub stages_entered: u64,
    pub max_i: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FirstStageRecord {
    /// `true` if the walk left through the threshold rather than through 0.
    pub exit_high: bool,
    pub flips: u64,
    pub final_i: u64,
}

/// Step the exponent walk until `i = 0` or `i >= k_j`. Returns flips made.
#[inline]
fn walk_stage<C: CoinSource + ?Sized>(
    state: &mut StageState,
    max_i: &mut u64,
    coin: &mut C,
    aux: &mut UniformSource,
) -> Result<u64> {
    let log_q = state.log_tail_ratio();
    let mut flips = 0u64;
    loop {
        let heads = coin.flip()?;
        flips += 1;
        if heads {
            state.i -= 1;
        } else {
            // i - 1 + G with G >= 1; G is only needed on tails.
            let g = aux.geometric_with_log_ratio(log_q);
            state.i = state.i.saturating_add(g - 1);
        }
        *max_i = (*max_i).max(state.i);
        if state.i == 0 || state.at_threshold() {
            return Ok(flips);
        }
    }
}

/// Produce one Bernoulli(Cp) bit.
///
/// The caller must ensure the coin satisfies `C p <= 1 - eps`; the factory
/// cannot check this. The coin is only ever flipped, and `flips` in the
/// result counts exactly those flips.
pub fn sample<C: CoinSource + ?Sized>(
    params: &FactoryParams,
    coin: &mut C,
    aux: &mut UniformSource,
) -> Result<RunRecord> {
    let mut state = StageState::initial(params);
    let mut flips = 0u64;
    let mut max_i = state.i;
    loop {
        flips += walk_stage(&mut state, &mut max_i, coin, aux)?;
        if state.i == 0 {
            return Ok(RunRecord {
                output: true,
                flips,
                stages_entered: state.j,
                max_i,
            });
        }
        let q = gate_log_probability(state.i, params.gamma, state.eps).exp();
        if !aux.bernoulli_known(q)? {
            return Ok(RunRecord {
                output: false,
                flips,
                stages_entered: state.j,
                max_i,
            });
        }
        state.advance(params.gamma);
        if state.eps < EPS_UNDERFLOW {
            return Err(Error::Invariant(format!(
                "stage slack underflowed at stage {}",
                state.j
            )));
        }
    }
}

/// Run only the first stage's walk from `i = 1`.
pub fn run_first_stage<C: CoinSource + ?Sized>(
    params: &FactoryParams,
    coin: &mut C,
    aux: &mut UniformSource,
) -> Result<FirstStageRecord> {
    let mut state = StageState::initial(params);
    let mut max_i = state.i;
    let flips = walk_stage(&mut state, &mut max_i, coin, aux)?;
    Ok(FirstStageRecord {
        exit_high: state.i != 0,
        flips,
        final_i: state.i,
    })
}

/// Seeds for replicate `index` of a batch starting at `base`.
pub fn replicate_seed(base: RandomSeed, index: u64) -> RandomSeed {
    RandomSeed::new(base.seed, base.stream_id.wrapping_add(index))
}

/// Run `n` independent replicates, each with its own coin from `make_coin`
/// and its own auxiliary stream. Results come back in replicate order and do
/// not depend on the thread count.
pub fn run_replicates<K, F>(
    params: &FactoryParams,
    base: RandomSeed,
    n: u64,
    make_coin: F,
) -> Result<Vec<RunRecord>>
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
            sample(params, &mut coin, &mut aux)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SampleSummary {
    pub flips: FlipStats,
    pub ones: u64,
    pub max_stages: u64,
}

impl SampleSummary {
    pub fn n(&self) -> u64 {
        self.flips.count()
    }

    pub fn output_mean(&self) -> f64 {
        if self.n() == 0 {
            return 0.0;
        }
        self.ones as f64 / self.n() as f64
    }
}

impl<'a> FromIterator<&'a RunRecord> for SampleSummary {
    fn from_iter<I: IntoIterator<Item = &'a RunRecord>>(iter: I) -> Self {
        let mut flips = FlipStats::new();
        let mut ones = 0;
        let mut max_stages = 0;
        for rec in iter {
            flips.push(rec.flips);
            ones += rec.output as u64;
            max_stages = max_stages.max(rec.stages_entered);
        }
        SampleSummary {
            flips,
            ones,
            max_stages,
        }
    }
}

/// [`run_replicates`] followed by aggregation.
pub fn sample_many<K, F>(
    params: &FactoryParams,
    base: RandomSeed,
    n: u64,
    make_coin: F,
) -> Result<SampleSummary>
where
    K: CoinSource,
    F: Fn(RandomSeed) -> Result<K> + Sync,
{
    if n == 0 {
        return Err(Error::domain("replicate count must be at least 1"));
    }
    let records = run_replicates(params, base, n, make_coin)?;
    Ok(records.iter().collect())
}
