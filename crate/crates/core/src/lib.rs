//! Exact simulation of a Bernoulli(Cp) coin from flips of a Bernoulli(p) coin
//! with unknown `p`, together with running-time bounds, a parameter
//! optimizer, an estimator of `p` built on the factory, and a statistical
//! harness that checks all of it.

pub mod basic;
pub mod bounds;
pub mod cli;
pub mod coin;
pub mod error;
pub mod estimator;
pub mod factory;
pub mod harness;
pub mod randomness;
pub mod stats;

pub use coin::{CoinSource, CoinSpec, SimulatedCoin, StreamCoin};
pub use error::{Error, Result};
pub use factory::{make_params, sample, FactoryParams, RunRecord};
pub use randomness::{RandomSeed, UniformSource};
pub use stats::FlipStats;
