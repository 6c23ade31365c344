//! Deterministic parallel Monte Carlo.
//!
//! Replicate `r` under seed `s` always draws from the ChaCha8 stream
//! `(s, r)`, and partial accumulators are merged in chunk order, so the
//! result does not depend on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub type Rng = ChaCha8Rng;

const CHUNK: u64 = 4096;

/// Generator for replicate `index` under `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Streaming mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// A Monte Carlo estimate of a scalar expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
    pub label: String,
}

impl RiskReport {
    pub fn from_welford(w: &Welford, seed: u64, label: impl Into<String>) -> Self {
        RiskReport { mean: w.mean(), stderr: w.stderr(), n: w.count(), seed, label: label.into() }
    }

    /// `|mean − target| < k · stderr`, with exact equality accepted.
    pub fn within(&self, target: f64, k: f64) -> bool {
        let gap = (self.mean - target).abs();
        gap == 0.0 || gap < k * self.stderr
    }
}

/// Output of [`run`]: one accumulator per tracked statistic.
#[derive(Debug, Clone)]
pub struct McOutput<const K: usize> {
    pub acc: [Welford; K],
    /// Replicates discarded because the statistic was singular there.
    pub singular: u64,
}

impl<const K: usize> McOutput<K> {
    pub fn report(&self, k: usize, seed: u64, label: impl Into<String>) -> RiskReport {
        RiskReport::from_welford(&self.acc[k], seed, label)
    }

    /// Errors when more than `max_fraction` of the replicates were singular.
    pub fn guard(self, max_fraction: f64) -> Result<Self> {
        let total = self.acc[0].count() + self.singular;
        if total > 0 && self.singular as f64 > max_fraction * total as f64 {
            return Err(Error::NumericalGuard(format!(
                "{} of {} replicates hit a singularity",
                self.singular, total
            )));
        }
        Ok(self)
    }
}

/// Runs `n` replicates of `f`, each with its own derived generator.
///
/// `init` builds per-worker scratch state; `f` returns `Ok(values)` for a
/// regular replicate, `Err(Error::Singular)` for one to be skipped and
/// counted, and any other error aborts the run.
pub fn run<const K: usize, S, I, F>(n: u64, seed: u64, init: I, f: F) -> Result<McOutput<K>>
where
    I: Fn() -> S + Sync,
    F: Fn(&mut S, &mut Rng) -> Result<[f64; K]> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Result<([Welford; K], u64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut state = init();
            let mut acc = [Welford::default(); K];
            let mut singular = 0;
            for idx in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let mut rng = replicate_rng(seed, idx);
                match f(&mut state, &mut rng) {
                    Ok(vals) => {
                        for (a, v) in acc.iter_mut().zip(vals) {
                            a.push(v);
                        }
                    }
                    Err(Error::Singular(_)) => singular += 1,
                    Err(e) => return Err(e),
                }
            }
            Ok((acc, singular))
        })
        .collect();
    let mut out = McOutput { acc: [Welford::default(); K], singular: 0 };
    for part in parts {
        let (acc, singular) = part?;
        for (o, a) in out.acc.iter_mut().zip(acc.iter()) {
            o.merge(a);
        }
        out.singular += singular;
    }
    Ok(out)
}

/// Collects `n` values produced by `f`, one per replicate generator.
pub fn collect<T, F>(n: u64, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut Rng) -> Result<T> + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|idx| f(&mut replicate_rng(seed, idx)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn welford_merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let mut all = Welford::default();
        xs.iter().for_each(|x| all.push(*x));
        let mut a = Welford::default();
        let mut b = Welford::default();
        xs[..313].iter().for_each(|x| a.push(*x));
        xs[313..].iter().for_each(|x| b.push(*x));
        a.merge(&b);
        assert!((a.mean() - all.mean()).abs() < 1e-12);
        assert!((a.variance() - all.variance()).abs() < 1e-10);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let job = || {
            run::<1, _, _, _>(20_000, 7, || (), |_, rng| Ok([rng.random::<f64>()])).unwrap().acc[0]
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(job);
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(job);
        assert_eq!(one, four);
    }
}
