//! Small statistics toolkit: normal quantiles, binomial proportions,
//! histograms and a chi-square goodness-of-fit test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

/// Standard normal quantile `Phi^-1(p)` for `p` in `(0, 1)`.
///
/// The `erfc_inv` estimate is polished by one Newton step on `erfc`, which
/// brings it to the accuracy of `erfc` itself.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p == 0.5 {
        return 0.0;
    }
    let x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if pdf <= 0.0 || !x.is_finite() {
        return x;
    }
    // work in the tail that keeps the cdf away from 1
    let err = if x < 0.0 {
        0.5 * erfc(-x / std::f64::consts::SQRT_2) - p
    } else {
        (1.0 - p) - 0.5 * erfc(x / std::f64::consts::SQRT_2)
    };
    x - err / pdf
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// A binomial proportion with its standard error and Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub std_error: f64,
    /// Wilson score interval at 95 %.
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Proportion {
    pub fn new(successes: u64, trials: u64) -> Self {
        if trials == 0 {
            return Self {
                successes,
                trials,
                estimate: f64::NAN,
                std_error: f64::NAN,
                ci_low: 0.0,
                ci_high: 1.0,
            };
        }
        let n = trials as f64;
        let p = successes as f64 / n;
        let (ci_low, ci_high) = wilson_interval(successes, trials, 1.959_963_984_540_054);
        Self {
            successes,
            trials,
            estimate: p,
            std_error: (p * (1.0 - p) / n).sqrt(),
            ci_low,
            ci_high,
        }
    }

    /// `|estimate - p| <= k sqrt(p (1 - p) / n)`, the error measured with the
    /// expected rather than the observed rate.
    pub fn within_sigma(&self, p: f64, k: f64) -> bool {
        (self.estimate - p).abs() <= k * binomial_sigma(p, self.trials)
    }
}

/// Standard deviation of a proportion with rate `p` over `n` trials.
pub fn binomial_sigma(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Wilson score interval at `z` standard deviations.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Equal-width histogram with under- and overflow counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(hi > lo && bins > 0 && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidSpec(format!("bad histogram range [{lo}, {hi}) x {bins}")));
        }
        Ok(Self {
            lo,
            hi,
            counts: vec![0; bins],
            underflow: 0,
            overflow: 0,
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    pub fn edge(&self, i: usize) -> f64 {
        if i == self.bins() {
            self.hi
        } else {
            self.lo + i as f64 * self.width()
        }
    }

    pub fn add(&mut self, value: f64) {
        if value < self.lo {
            self.underflow += 1;
        } else if value >= self.hi {
            self.overflow += 1;
        } else {
            let last = self.bins() - 1;
            let i = ((value - self.lo) / self.width()) as usize;
            self.counts[i.min(last)] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    /// Adds the counts of a histogram with the same binning.
    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if self.lo != other.lo || self.hi != other.hi || self.bins() != other.bins() {
            return Err(Error::InvalidSpec("histogram binnings differ".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        Ok(())
    }
}

/// Result of a chi-square goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Cells left after merging sparse neighbours.
    pub cells: usize,
}

/// Chi-square test of observed counts against expected probabilities.
/// Adjacent cells are merged until each expects at least `min_expected`
/// entries.
pub fn chi_square(observed: &[u64], probabilities: &[f64], min_expected: f64) -> Result<ChiSquareTest> {
    if observed.len() != probabilities.len() || observed.is_empty() {
        return Err(Error::InvalidSpec("observed and expected cell counts differ".into()));
    }
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(Error::InvalidSpec("no observations".into()));
    }
    let n = n as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&ob, &p) in observed.iter().zip(probabilities) {
        o += ob as f64;
        e += p * n;
        if e >= min_expected {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    if cells.len() < 2 {
        return Err(Error::InvalidSpec("too few cells for a chi-square test".into()));
    }
    let statistic: f64 = cells.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value: dist.sf(statistic),
        cells: cells.len(),
    })
}

/// Chi-square test of a histogram, tails included, against a CDF.
pub fn chi_square_against_cdf(hist: &Histogram, cdf: impl Fn(f64) -> f64) -> Result<ChiSquareTest> {
    let mut observed = Vec::with_capacity(hist.bins() + 2);
    let mut probs = Vec::with_capacity(hist.bins() + 2);
    observed.push(hist.underflow);
    probs.push(cdf(hist.lo));
    let mut prev = cdf(hist.lo);
    for i in 0..hist.bins() {
        let next = cdf(hist.edge(i + 1));
        observed.push(hist.counts[i]);
        probs.push(next - prev);
        prev = next;
    }
    observed.push(hist.overflow);
    probs.push(1.0 - prev);
    chi_square(&observed, &probs, 5.0)
}
