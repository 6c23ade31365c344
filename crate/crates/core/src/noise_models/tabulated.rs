use rand::Rng as _;

use crate::error::{Error, Result};
use crate::mc::Rng;

pub const GRID_POINTS: usize = 1 << 14;

/// Piecewise-linear CDF on a grid, sampled by inversion.
#[derive(Debug, Clone)]
pub struct TabulatedCdf {
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl TabulatedCdf {
    /// Tabulates the (unnormalised) density `f` on `[lo, hi]`.
    pub fn from_density<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, points: usize) -> Result<Self> {
        let h = (hi - lo) / (points - 1) as f64;
        let xs: Vec<f64> = (0..points).map(|i| lo + h * i as f64).collect();
        let fs: Vec<f64> = xs.iter().map(|&x| f(x).max(0.0)).collect();
        let mut cdf = Vec::with_capacity(points);
        cdf.push(0.0);
        for i in 1..points {
            let prev = cdf[i - 1];
            cdf.push(prev + 0.5 * h * (fs[i - 1] + fs[i]));
        }
        let total = *cdf.last().expect("nonempty grid");
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::Sampling("tabulated density has no mass".into()));
        }
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(TabulatedCdf { xs, cdf })
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let idx = self.cdf.partition_point(|&c| c < u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[idx - 1], self.cdf[idx]);
        let (x0, x1) = (self.xs[idx - 1], self.xs[idx]);
        if c1 > c0 {
            x0 + (x1 - x0) * (u - c0) / (c1 - c0)
        } else {
            x1
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}
