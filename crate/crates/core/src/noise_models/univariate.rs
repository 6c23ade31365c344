//! One-dimensional symmetric laws used as product coordinates.

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{param, Error, Result};
use crate::mc::Rng;
use crate::special::{binomial, norm_cdf, norm_pdf, norm_sf, normal_moment};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnivariateLaw {
    Gaussian { var: f64 },
    /// Density `e^{-|y|/b} / (2b)`.
    Laplace { b: f64 },
    /// Uniform on `[-a, a]`.
    Uniform { a: f64 },
    /// `±a` with probability one half each.
    Rademacher { a: f64 },
    /// `a·R + τ·N` with `R` Rademacher and `N` standard normal.
    SmoothedRademacher { a: f64, tau: f64 },
}

impl UnivariateLaw {
    /// Laplace law with unit variance scaled to `var`.
    pub fn laplace_with_variance(var: f64) -> Self {
        UnivariateLaw::Laplace { b: (var / 2.0).sqrt() }
    }

    pub fn uniform_with_variance(var: f64) -> Self {
        UnivariateLaw::Uniform { a: (3.0 * var).sqrt() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            UnivariateLaw::Gaussian { var } => var >= 0.0 && var.is_finite(),
            UnivariateLaw::Laplace { b } => b > 0.0 && b.is_finite(),
            UnivariateLaw::Uniform { a } => a > 0.0 && a.is_finite(),
            UnivariateLaw::Rademacher { a } => a > 0.0 && a.is_finite(),
            UnivariateLaw::SmoothedRademacher { a, tau } => a >= 0.0 && tau > 0.0,
        };
        if ok {
            Ok(())
        } else {
            param(format!("invalid one-dimensional law {self:?}"))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            UnivariateLaw::Gaussian { .. } => "gaussian",
            UnivariateLaw::Laplace { .. } => "laplace",
            UnivariateLaw::Uniform { .. } => "uniform",
            UnivariateLaw::Rademacher { .. } => "rademacher",
            UnivariateLaw::SmoothedRademacher { .. } => "smoothed-rademacher",
        }
    }

    pub fn variance(&self) -> f64 {
        self.even_moment(2)
    }

    /// `E[Y^p]`; zero for odd `p` by symmetry.
    pub fn even_moment(&self, p: u32) -> f64 {
        if p % 2 == 1 {
            return 0.0;
        }
        let pf = f64::from(p);
        match *self {
            UnivariateLaw::Gaussian { var } => normal_moment(p) * var.powf(pf / 2.0),
            UnivariateLaw::Laplace { b } => (1..=p).map(f64::from).product::<f64>() * b.powi(p as i32),
            UnivariateLaw::Uniform { a } => a.powi(p as i32) / (pf + 1.0),
            UnivariateLaw::Rademacher { a } => a.powi(p as i32),
            UnivariateLaw::SmoothedRademacher { a, tau } => (0..=p / 2)
                .map(|j| {
                    binomial(p, 2 * j)
                        * a.powi((p - 2 * j) as i32)
                        * tau.powi(2 * j as i32)
                        * normal_moment(2 * j)
                })
                .sum(),
        }
    }

    pub fn is_log_concave(&self) -> bool {
        matches!(
            self,
            UnivariateLaw::Gaussian { .. } | UnivariateLaw::Laplace { .. } | UnivariateLaw::Uniform { .. }
        )
    }

    pub fn has_density(&self) -> bool {
        match *self {
            UnivariateLaw::Gaussian { var } => var > 0.0,
            UnivariateLaw::Rademacher { .. } => false,
            _ => true,
        }
    }

    /// Half-width of the support when it is bounded.
    pub fn support_radius(&self) -> Option<f64> {
        match *self {
            UnivariateLaw::Uniform { a } | UnivariateLaw::Rademacher { a } => Some(a),
            UnivariateLaw::Gaussian { var } if var == 0.0 => Some(0.0),
            _ => None,
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            UnivariateLaw::Gaussian { var } => var.sqrt() * rng.sample::<f64, _>(StandardNormal),
            UnivariateLaw::Laplace { b } => {
                let e = -b * (1.0 - rng.random::<f64>()).ln();
                if rng.random::<bool>() {
                    e
                } else {
                    -e
                }
            }
            UnivariateLaw::Uniform { a } => a * (2.0 * rng.random::<f64>() - 1.0),
            UnivariateLaw::Rademacher { a } => {
                if rng.random::<bool>() {
                    a
                } else {
                    -a
                }
            }
            UnivariateLaw::SmoothedRademacher { a, tau } => {
                let s = if rng.random::<bool>() { a } else { -a };
                s + tau * rng.sample::<f64, _>(StandardNormal)
            }
        }
    }

    pub fn density(&self, y: f64) -> Result<f64> {
        Ok(match *self {
            UnivariateLaw::Gaussian { var } => {
                if var == 0.0 {
                    return Err(Error::DensityUnavailable("degenerate gaussian".into()));
                }
                let s = var.sqrt();
                norm_pdf(y / s) / s
            }
            UnivariateLaw::Laplace { b } => (-y.abs() / b).exp() / (2.0 * b),
            UnivariateLaw::Uniform { a } => {
                if y.abs() <= a {
                    0.5 / a
                } else {
                    0.0
                }
            }
            UnivariateLaw::Rademacher { .. } => {
                return Err(Error::DensityUnavailable("rademacher law is discrete".into()))
            }
            UnivariateLaw::SmoothedRademacher { a, tau } => {
                0.5 * (norm_pdf((y - a) / tau) + norm_pdf((y + a) / tau)) / tau
            }
        })
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match *self {
            UnivariateLaw::Gaussian { var } => {
                if var == 0.0 {
                    f64::from(u8::from(y >= 0.0))
                } else {
                    norm_cdf(y / var.sqrt())
                }
            }
            UnivariateLaw::Laplace { b } => {
                if y < 0.0 {
                    0.5 * (y / b).exp()
                } else {
                    1.0 - 0.5 * (-y / b).exp()
                }
            }
            UnivariateLaw::Uniform { a } => ((y + a) / (2.0 * a)).clamp(0.0, 1.0),
            UnivariateLaw::Rademacher { a } => {
                if y < -a {
                    0.0
                } else if y < a {
                    0.5
                } else {
                    1.0
                }
            }
            UnivariateLaw::SmoothedRademacher { a, tau } => {
                0.5 * (norm_cdf((y - a) / tau) + norm_cdf((y + a) / tau))
            }
        }
    }

    /// `E[Y · 1{Y > y}]`.
    pub fn upper_first_moment(&self, y: f64) -> f64 {
        match *self {
            UnivariateLaw::Gaussian { var } => {
                if var == 0.0 {
                    0.0
                } else {
                    let s = var.sqrt();
                    s * norm_pdf(y / s)
                }
            }
            UnivariateLaw::Laplace { b } => 0.5 * (y.abs() + b) * (-y.abs() / b).exp(),
            UnivariateLaw::Uniform { a } => {
                if y.abs() <= a {
                    (a * a - y * y) / (4.0 * a)
                } else {
                    0.0
                }
            }
            UnivariateLaw::Rademacher { a } => {
                if (-a..a).contains(&y) {
                    0.5 * a
                } else {
                    0.0
                }
            }
            UnivariateLaw::SmoothedRademacher { a, tau } => {
                let branch = |m: f64| m * norm_sf((y - m) / tau) + tau * norm_pdf((y - m) / tau);
                0.5 * (branch(a) + branch(-a))
            }
        }
    }

    /// One-dimensional Stein kernel `E[Y;Y>y] / p(y)`.
    pub fn stein_kernel(&self, y: f64) -> Result<f64> {
        match *self {
            UnivariateLaw::Gaussian { var } => Ok(var),
            UnivariateLaw::Laplace { b } => Ok(b * (y.abs() + b)),
            UnivariateLaw::Uniform { a } => {
                if y.abs() <= a {
                    Ok(0.5 * (a * a - y * y))
                } else {
                    Err(Error::Evaluation(format!("{y} outside [-{a}, {a}]")))
                }
            }
            UnivariateLaw::Rademacher { .. } => {
                Err(Error::DensityUnavailable("rademacher law has no Stein kernel".into()))
            }
            UnivariateLaw::SmoothedRademacher { .. } => {
                let p = self.density(y)?;
                if p <= 0.0 {
                    return Err(Error::Evaluation(format!("zero density at {y}")));
                }
                Ok(self.upper_first_moment(y) / p)
            }
        }
    }

    /// Zero-bias density `σ^{-2} E[Y; Y > y]`.
    pub fn zero_bias_density(&self, y: f64) -> f64 {
        self.upper_first_moment(y) / self.variance()
    }

    pub fn zero_bias_cdf(&self, y: f64) -> f64 {
        match *self {
            UnivariateLaw::Gaussian { .. } => self.cdf(y),
            UnivariateLaw::Laplace { b } => {
                let g = |x: f64| 1.0 - (-x / b).exp() * (1.0 + x / b);
                let signed = 0.5 + 0.5 * y.signum() * g(y.abs());
                0.5 * self.cdf(y) + 0.5 * signed
            }
            UnivariateLaw::Uniform { a } => {
                let t = y.clamp(-a, a);
                0.5 + (3.0 * a * a * t - t * t * t) / (4.0 * a * a * a)
            }
            UnivariateLaw::Rademacher { a } => UnivariateLaw::Uniform { a }.cdf(y),
            UnivariateLaw::SmoothedRademacher { a, tau } => {
                let w = a * a / (a * a + tau * tau);
                let psi = |x: f64| x * norm_cdf(x) + norm_pdf(x);
                let smeared_uniform = if a == 0.0 {
                    norm_cdf(y / tau)
                } else {
                    tau / (2.0 * a) * (psi((y + a) / tau) - psi((y - a) / tau))
                };
                w * smeared_uniform + (1.0 - w) * self.cdf(y)
            }
        }
    }

    /// Draws from the zero-bias law of `Y`.
    pub fn sample_zero_bias(&self, rng: &mut Rng) -> f64 {
        match *self {
            UnivariateLaw::Gaussian { .. } => self.sample(rng),
            UnivariateLaw::Laplace { b } => {
                let mag = if rng.random::<bool>() {
                    Gamma::new(2.0, b).expect("valid gamma").sample(rng)
                } else {
                    -b * (1.0 - rng.random::<f64>()).ln()
                };
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            }
            UnivariateLaw::Uniform { a } => {
                let r = rng.random::<f64>().cbrt();
                let u = 2.0 * rng.random::<f64>() - 1.0;
                a * r * u
            }
            UnivariateLaw::Rademacher { a } => a * (2.0 * rng.random::<f64>() - 1.0),
            UnivariateLaw::SmoothedRademacher { a, tau } => {
                let w = a * a / (a * a + tau * tau);
                let z = tau * rng.sample::<f64, _>(StandardNormal);
                if rng.random::<f64>() < w {
                    a * (2.0 * rng.random::<f64>() - 1.0) + z
                } else {
                    let s = if rng.random::<bool>() { a } else { -a };
                    s + z
                }
            }
        }
    }

    /// Half-width beyond which the square-biased mass is negligible.
    pub(crate) fn effective_radius(&self) -> f64 {
        match *self {
            UnivariateLaw::Gaussian { var } => 14.0 * var.sqrt(),
            UnivariateLaw::Laplace { b } => 50.0 * b,
            UnivariateLaw::Uniform { a } | UnivariateLaw::Rademacher { a } => a,
            UnivariateLaw::SmoothedRademacher { a, tau } => a + 14.0 * tau,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, integrate_real_line};

    const LAWS: [UnivariateLaw; 4] = [
        UnivariateLaw::Gaussian { var: 1.7 },
        UnivariateLaw::Laplace { b: 0.8 },
        UnivariateLaw::Uniform { a: 1.3 },
        UnivariateLaw::SmoothedRademacher { a: 1.0, tau: 0.3 },
    ];

    fn integrate_law<F: Fn(f64) -> f64>(law: &UnivariateLaw, f: F) -> f64 {
        match law.support_radius() {
            Some(a) => integrate(f, -a, a, 1e-12).unwrap().value,
            None => {
                let l = integrate_real_line(|x| if x < 0.0 { f(x) } else { 0.0 }, 1e-12).unwrap();
                let r = integrate_real_line(|x| if x >= 0.0 { f(x) } else { 0.0 }, 1e-12).unwrap();
                l.value + r.value
            }
        }
    }

    #[test]
    fn moments_match_quadrature() {
        for law in LAWS {
            for p in [0u32, 2, 4, 8] {
                let q = integrate_law(&law, |y| y.powi(p as i32) * law.density(y).unwrap());
                let m = if p == 0 { 1.0 } else { law.even_moment(p) };
                assert!((q / m - 1.0).abs() < 1e-8, "{law:?} p={p}: {q} vs {m}");
            }
        }
    }

    #[test]
    fn tail_moment_matches_quadrature() {
        for law in LAWS {
            for y in [-0.9, 0.0, 0.4, 1.1] {
                let top = law.support_radius().unwrap_or(f64::INFINITY);
                if y >= top {
                    continue;
                }
                let q = if top.is_finite() {
                    integrate(|u| u * law.density(u).unwrap(), y, top, 1e-12).unwrap().value
                } else {
                    crate::quadrature::integrate_to_inf(|u| u * law.density(u).unwrap(), y, 1e-12)
                        .unwrap()
                        .value
                };
                let c = law.upper_first_moment(y);
                assert!((q - c).abs() < 1e-10 * c.abs().max(1e-3), "{law:?} y={y}: {q} vs {c}");
            }
        }
    }

    #[test]
    fn zero_bias_cdf_is_integral_of_density() {
        for law in LAWS {
            for y in [-0.7, 0.0, 0.5] {
                let lo = -law.effective_radius();
                let q = integrate(|u| law.zero_bias_density(u), lo, y, 1e-12).unwrap().value;
                assert!((q - law.zero_bias_cdf(y)).abs() < 1e-9, "{law:?} y={y}");
            }
        }
    }
}
