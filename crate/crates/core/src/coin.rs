//! The p-coin: a supplier of iid Bernoulli(p) flips with an unknown `p`.
//!
//! Factories see a coin only through [`CoinSource::flip`]. The flip counter is
//! for callers that want to audit a run afterwards.

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, Bytes, Read};
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::randomness::{RandomSeed, UniformSource};

pub trait CoinSource {
    /// Flip the coin once. `true` is heads.
    fn flip(&mut self) -> Result<bool>;

    /// Number of flips made so far.
    fn flips_used(&self) -> u64;
}

impl<C: CoinSource + ?Sized> CoinSource for &mut C {
    fn flip(&mut self) -> Result<bool> {
        (**self).flip()
    }

    fn flips_used(&self) -> u64 {
        (**self).flips_used()
    }
}

impl<C: CoinSource + ?Sized> CoinSource for Box<C> {
    fn flip(&mut self) -> Result<bool> {
        (**self).flip()
    }

    fn flips_used(&self) -> u64 {
        (**self).flips_used()
    }
}

/// A coin with a known bias, driven by its own uniform stream.
#[derive(Clone, Debug)]
pub struct SimulatedCoin {
    p: f64,
    src: UniformSource,
    flips: u64,
}

impl SimulatedCoin {
    pub fn new(p: f64, seed: RandomSeed) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("coin bias {p} not in [0, 1]")));
        }
        Ok(SimulatedCoin {
            p,
            src: UniformSource::new(seed),
            flips: 0,
        })
    }
}

impl CoinSource for SimulatedCoin {
    #[inline]
    fn flip(&mut self) -> Result<bool> {
        self.flips += 1;
        Ok(self.src.next_uniform() < self.p)
    }

    fn flips_used(&self) -> u64 {
        self.flips
    }
}

/// Reads flips as ASCII `'0'`/`'1'` bytes. Spaces, tabs, CR and LF are
/// skipped; anything else is a format error.
pub struct StreamCoin<R: Read> {
    bytes: Bytes<BufReader<R>>,
    offset: u64,
    flips: u64,
}

impl<R: Read> StreamCoin<R> {
    pub fn new(reader: R) -> Self {
        StreamCoin {
            bytes: BufReader::new(reader).bytes(),
            offset: 0,
            flips: 0,
        }
    }
}

impl StreamCoin<io::Cursor<Vec<u8>>> {
    pub fn from_text(text: &str) -> Self {
        StreamCoin::new(io::Cursor::new(text.as_bytes().to_vec()))
    }
}

impl<R: Read> CoinSource for StreamCoin<R> {
    fn flip(&mut self) -> Result<bool> {
        loop {
            let byte = match self.bytes.next() {
                None => {
                    return Err(Error::InputExhausted {
                        flips_used: self.flips,
                    })
                }
                Some(b) => b?,
            };
            let offset = self.offset;
            self.offset += 1;
            match byte {
                b'0' | b'1' => {
                    self.flips += 1;
                    return Ok(byte == b'1');
                }
                b' ' | b'\t' | b'\n' | b'\r' => continue,
                _ => return Err(Error::StreamFormat { byte, offset }),
            }
        }
    }

    fn flips_used(&self) -> u64 {
        self.flips
    }
}

/// Where flips come from, as given on the command line:
/// `sim:p=<real>`, `stream:<path>` or `stream:-` for stdin.
#[derive(Clone, Debug, PartialEq)]
pub enum CoinSpec {
    Simulated { p: f64 },
    Stream(StreamInput),
}

#[derive(Clone, Debug, PartialEq)]
pub enum StreamInput {
    Stdin,
    File(PathBuf),
}

impl CoinSpec {
    /// The bias, when it is known.
    pub fn known_p(&self) -> Option<f64> {
        match self {
            CoinSpec::Simulated { p } => Some(*p),
            CoinSpec::Stream(_) => None,
        }
    }

    pub fn open_stream(input: &StreamInput) -> Result<Box<dyn CoinSource>> {
        Ok(match input {
            StreamInput::Stdin => Box::new(StreamCoin::new(io::stdin())),
            StreamInput::File(path) => Box::new(StreamCoin::new(File::open(path)?)),
        })
    }
}

impl FromStr for CoinSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("sim:") {
            let value = rest
                .strip_prefix("p=")
                .ok_or_else(|| Error::domain(format!("expected sim:p=<real>, got {s:?}")))?;
            let p: f64 = value
                .parse()
                .map_err(|_| Error::domain(format!("bad coin bias {value:?}")))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::domain(format!("coin bias {p} not in [0, 1]")));
            }
            Ok(CoinSpec::Simulated { p })
        } else if let Some(rest) = s.strip_prefix("stream:") {
            match rest {
                "" => Err(Error::domain("stream coin needs a path or '-'")),
                "-" => Ok(CoinSpec::Stream(StreamInput::Stdin)),
                path => Ok(CoinSpec::Stream(StreamInput::File(path.into()))),
            }
        } else {
            Err(Error::domain(format!(
                "unknown coin selector {s:?} (expected sim:p=<real> or stream:<path|->)"
            )))
        }
    }
}

impl fmt::Display for CoinSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoinSpec::Simulated { p } => write!(f, "sim:p={p}"),
            CoinSpec::Stream(StreamInput::Stdin) => write!(f, "stream:-"),
            CoinSpec::Stream(StreamInput::File(path)) => write!(f, "stream:{}", path.display()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(p: f64) -> SimulatedCoin {
        SimulatedCoin::new(p, RandomSeed::new(9, 0)).unwrap()
    }

    #[test]
    fn degenerate_simulated_coins() {
        let mut zero = sim(0.0);
        let mut one = sim(1.0);
        for _ in 0..1000 {
            assert!(!zero.flip().unwrap());
            assert!(one.flip().unwrap());
        }
        assert_eq!(zero.flips_used(), 1000);
        assert_eq!(one.flips_used(), 1000);
    }

    #[test]
    fn simulated_coin_mean() {
        let mut coin = sim(0.4);
        let n = 100_000;
        let heads = (0..n).filter(|_| coin.flip().unwrap()).count();
        let mean = heads as f64 / n as f64;
        assert!((mean - 0.4).abs() <= 4.0 * (0.24f64 / n as f64).sqrt(), "mean {mean}");
        assert_eq!(coin.flips_used(), n as u64);
    }

    #[test]
    fn simulated_coin_rejects_bad_bias() {
        assert!(SimulatedCoin::new(1.01, RandomSeed::new(0, 0)).is_err());
        assert!(SimulatedCoin::new(-0.01, RandomSeed::new(0, 0)).is_err());
    }

    #[test]
    fn stream_skips_whitespace_and_counts() {
        let mut coin = StreamCoin::from_text("1 0\t\r\n1");
        assert!(coin.flip().unwrap());
        assert!(!coin.flip().unwrap());
        assert!(coin.flip().unwrap());
        assert_eq!(coin.flips_used(), 3);
        match coin.flip() {
            Err(Error::InputExhausted { flips_used }) => assert_eq!(flips_used, 3),
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn stream_rejects_foreign_bytes() {
        let mut coin = StreamCoin::from_text("01x");
        coin.flip().unwrap();
        coin.flip().unwrap();
        match coin.flip() {
            Err(Error::StreamFormat { byte, offset }) => {
                assert_eq!(byte, b'x');
                assert_eq!(offset, 2);
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn parse_specs() {
        assert_eq!("sim:p=0.4".parse::<CoinSpec>().unwrap(), CoinSpec::Simulated { p: 0.4 });
        assert_eq!(
            "stream:-".parse::<CoinSpec>().unwrap(),
            CoinSpec::Stream(StreamInput::Stdin)
        );
        assert_eq!(
            "stream:/tmp/flips.txt".parse::<CoinSpec>().unwrap(),
            CoinSpec::Stream(StreamInput::File("/tmp/flips.txt".into()))
        );
        for bad in ["sim:0.4", "sim:p=2", "sim:p=abc", "stream:", "file:x", ""] {
            assert!(bad.parse::<CoinSpec>().is_err(), "{bad}");
        }
    }
}
