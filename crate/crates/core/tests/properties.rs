use bernoulli_factory::bounds::lower_bound;
use bernoulli_factory::factory::{run_replicates, SampleSummary};
use bernoulli_factory::{make_params, sample, CoinSource, RandomSeed, Result, SimulatedCoin, UniformSource};
use proptest::prelude::*;

/// Wraps a coin, counts flips itself, and refuses to report its count so a
/// factory that peeks at `flips_used` is caught.
struct Recording {
    inner: SimulatedCoin,
    flips: Vec<bool>,
}

impl CoinSource for Recording {
    fn flip(&mut self) -> Result<bool> {
        let b = self.inner.flip()?;
        self.flips.push(b);
        Ok(b)
    }

    fn flips_used(&self) -> u64 {
        panic!("the factory must not read the coin's flip counter")
    }
}

#[test]
fn factory_only_flips() {
    let params = make_params(2.0, 0.2, None, None).unwrap();
    for r in 0..500 {
        let seed = RandomSeed::new(11, r);
        let mut coin = Recording {
            inner: SimulatedCoin::new(0.35, seed.coin_stream()).unwrap(),
            flips: Vec::new(),
        };
        let mut aux = UniformSource::new(seed);
        let rec = sample(&params, &mut coin, &mut aux).unwrap();
        assert_eq!(rec.flips, coin.flips.len() as u64);
        // A run that ends with output 1 ends on heads.
        if rec.output {
            assert_eq!(coin.flips.last(), Some(&true));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flips_match_coin_counter(
        c in 1.05f64..30.0,
        eps in 0.01f64..0.95,
        frac in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let params = make_params(c, eps, None, None).unwrap();
        let p = frac * params.max_p();
        let rs = RandomSeed::new(seed, 0);
        let mut coin = SimulatedCoin::new(p, rs.coin_stream()).unwrap();
        let mut aux = UniformSource::new(rs);
        let rec = sample(&params, &mut coin, &mut aux).unwrap();
        prop_assert_eq!(rec.flips, coin.flips_used());
        prop_assert!(rec.flips >= 1);
        prop_assert!(rec.stages_entered >= 1);
    }

    #[test]
    fn replicates_are_reproducible(seed in any::<u64>(), p in 0.0f64..0.4) {
        let params = make_params(2.0, 0.2, None, None).unwrap();
        let go = || run_replicates(&params, RandomSeed::new(seed, 0), 20, |s| {
            SimulatedCoin::new(p, s.coin_stream())
        }).unwrap();
        prop_assert_eq!(go(), go());
    }
}

#[test]
fn lower_bound_under_empirical_mean() {
    for (c, eps) in [(2.0, 0.2), (5.0, 0.2), (10.0, 0.05), (1.5, 0.5)] {
        let params = make_params(c, eps, None, None).unwrap();
        let p = params.max_p();
        let recs = run_replicates(&params, RandomSeed::new(21, 0), 5_000, |s| {
            SimulatedCoin::new(p, s.coin_stream())
        })
        .unwrap();
        let summary: SampleSummary = recs.iter().collect();
        let lb = lower_bound(c, eps).unwrap();
        assert!(lb < summary.flips.mean(), "C={c} eps={eps}: {lb} vs {}", summary.flips.mean());
    }
}
