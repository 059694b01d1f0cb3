use serde::{Serialize, Serializer};

/// Running summary of flip counts.
///
/// Sums are kept as exact integers, so merging is associative and
/// order-independent; only `mean` and `sd` round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FlipStats {
    count: u64,
    sum: u128,
    sum_sq: u128,
    min: u64,
    max: u64,
}

impl FlipStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: u64) {
        if self.count == 0 {
            self.min = x;
            self.max = x;
        } else {
            self.min = self.min.min(x);
            self.max = self.max.max(x);
        }
        self.count += 1;
        self.sum += x as u128;
        self.sum_sq += (x as u128) * (x as u128);
    }

    pub fn merge(&mut self, other: &FlipStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sum(&self) -> u128 {
        self.sum
    }

    pub fn min(&self) -> u64 {
        self.min
    }

    pub fn max(&self) -> u64 {
        self.max
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        self.sum as f64 / self.count as f64
    }

    /// Sample standard deviation (n - 1 denominator); 0 for fewer than two
    /// observations.
    pub fn sd(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as u128;
        // n * sum_sq - sum^2 is exact and non-negative in integers.
        let numer = n * self.sum_sq - self.sum * self.sum;
        let var = numer as f64 / (n as f64 * (n - 1) as f64);
        var.sqrt()
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        self.sd() / (self.count as f64).sqrt()
    }
}

impl FromIterator<u64> for FlipStats {
    fn from_iter<I: IntoIterator<Item = u64>>(iter: I) -> Self {
        let mut s = FlipStats::new();
        for x in iter {
            s.push(x);
        }
        s
    }
}

#[derive(Serialize)]
struct FlipStatsView {
    count: u64,
    mean: f64,
    sd: f64,
    min: u64,
    max: u64,
}

impl Serialize for FlipStats {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        FlipStatsView {
            count: self.count,
            mean: self.mean(),
            sd: self.sd(),
            min: self.min,
            max: self.max,
        }
        .serialize(serializer)
    }
}
