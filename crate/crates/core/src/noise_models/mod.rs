//! Observation laws `X = θ + Y` with exact moments and optional densities.

mod elliptical;
mod tabulated;
mod univariate;

use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};

pub use elliptical::{Elliptical, Generator, GeneratorFn};
pub use tabulated::{TabulatedCdf, GRID_POINTS};
pub use univariate::UnivariateLaw;

use crate::error::{param, Error, Result};
use crate::mat::Mat;
use crate::mc::{self, Rng};
use crate::special::{binomial, gamma_inverse_moment, ln_ball_volume, normal_moment, sphere_coord_moment};

/// The centred part `Y` of an observation law.
#[derive(Debug, Clone)]
pub enum Family {
    GaussianIso { sigma2: f64 },
    /// `Y = s·N/√γ`, `γ ~ Γ(k/2, rate k/2)`, dispersion `s² = scale2`.
    StudentT { k: f64, scale2: f64 },
    /// `Y = σ√d·U` with `U` uniform on the unit sphere.
    SphereUniform { sigma: f64 },
    /// Uniform on the ball of radius `σ√d`.
    BallUniform { sigma: f64 },
    ProductIid { law: UnivariateLaw },
    Elliptical(Arc<Elliptical>),
    /// Uniform on a finite set of centred points.
    FiniteSupport { points: Vec<Vec<f64>> },
    /// Component `s` contributes `δ_s + Y_s` where `δ_s` is its offset
    /// from the mixture mean.
    Mixture { components: Vec<NoiseModel>, weights: Vec<f64>, offsets: Vec<Vec<f64>> },
    /// `Y = √(1−ε)·G + √ε·Y₁`, `G ~ N(0, σ²Id)`.
    CorruptedAdditive { eps: f64, sigma2: f64, outlier: Box<NoiseModel> },
    /// `Y = G` with probability `1−ε`, `Y₁` otherwise.
    CorruptedMixing { eps: f64, sigma2: f64, outlier: Box<NoiseModel> },
    /// `Y = A·Y_base` with `A` of size `d×m`.
    LinearTransform { a: Mat, base: Box<NoiseModel> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scaling {
    Standard,
    /// Centred part multiplied by `1/√d`, so `σ_d² = σ²/d`.
    Pinsker,
}

#[derive(Debug, Clone)]
pub struct NoiseModel {
    d: usize,
    theta: Vec<f64>,
    family: Family,
    scaling: Scaling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary {
    pub mean: Vec<f64>,
    pub cov: Mat,
    pub trace_cov: f64,
    pub kappa: f64,
    pub c4: Option<f64>,
    pub c8: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Need {
    Kernel,
    ZeroBias,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidityReport {
    pub ok: bool,
    pub reasons: Vec<String>,
    pub warnings: Vec<String>,
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        param("dimension must be positive")
    } else {
        Ok(())
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

impl NoiseModel {
    fn build(d: usize, family: Family) -> Result<Self> {
        check_dim(d)?;
        Ok(NoiseModel { d, theta: vec![0.0; d], family, scaling: Scaling::Standard })
    }

    pub fn gaussian(d: usize, sigma2: f64) -> Result<Self> {
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return param("gaussian variance must be finite and nonnegative");
        }
        Self::build(d, Family::GaussianIso { sigma2 })
    }

    /// Student law with unit dispersion, covariance `k/(k−2)·Id`.
    pub fn student(d: usize, k: f64) -> Result<Self> {
        Self::student_with_dispersion(d, k, 1.0)
    }

    pub fn student_with_dispersion(d: usize, k: f64, scale2: f64) -> Result<Self> {
        if !(k >= 5.0) {
            return param(format!("student degrees of freedom must be at least 5, got {k}"));
        }
        if !(scale2 > 0.0 && scale2.is_finite()) {
            return param("student dispersion must be positive");
        }
        Self::build(d, Family::StudentT { k, scale2 })
    }

    pub fn sphere(d: usize, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return param("sphere scale must be nonnegative");
        }
        Self::build(d, Family::SphereUniform { sigma })
    }

    pub fn ball(d: usize, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return param("ball scale must be positive");
        }
        Self::build(d, Family::BallUniform { sigma })
    }

    pub fn product(d: usize, law: UnivariateLaw) -> Result<Self> {
        law.validate()?;
        Self::build(d, Family::ProductIid { law })
    }

    pub fn elliptical(generator: Generator, dispersion: Mat) -> Result<Self> {
        let e = Elliptical::new(generator, dispersion)?;
        Self::build(e.d, Family::Elliptical(Arc::new(e)))
    }

    pub fn finite_support(points: Vec<Vec<f64>>) -> Result<Self> {
        let d = points.first().map(Vec::len).unwrap_or(0);
        if points.is_empty() || points.iter().any(|p| p.len() != d) {
            return param("finite support needs points of equal dimension");
        }
        let n = points.len() as f64;
        for i in 0..d {
            let m: f64 = points.iter().map(|p| p[i]).sum::<f64>() / n;
            if m.abs() > 1e-12 {
                return param("finite support points must have mean zero");
            }
        }
        Self::build(d, Family::FiniteSupport { points })
    }

    /// Mixture of components; the overall location is the mixture mean.
    pub fn mixture(components: Vec<NoiseModel>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() || components.len() != weights.len() {
            return param("mixture needs one weight per component");
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return param("mixture weights must be nonnegative and sum to one");
        }
        let d = components[0].d;
        if components.iter().any(|c| c.d != d) {
            return param("mixture components must share the dimension");
        }
        let mut theta = vec![0.0; d];
        for (c, w) in components.iter().zip(&weights) {
            for (t, v) in theta.iter_mut().zip(&c.theta) {
                *t += w * v;
            }
        }
        let offsets = components
            .iter()
            .map(|c| c.theta.iter().zip(&theta).map(|(a, b)| a - b).collect())
            .collect();
        let mut m = Self::build(d, Family::Mixture { components, weights, offsets })?;
        m.theta = theta;
        Ok(m)
    }

    fn check_eps(eps: f64) -> Result<()> {
        if (0.0..=1.0).contains(&eps) {
            Ok(())
        } else {
            param(format!("corruption level must lie in [0, 1], got {eps}"))
        }
    }

    pub fn corrupted_additive(eps: f64, sigma2: f64, outlier: NoiseModel) -> Result<Self> {
        Self::check_eps(eps)?;
        let d = outlier.d;
        Self::build(d, Family::CorruptedAdditive { eps, sigma2, outlier: Box::new(outlier) })
    }

    pub fn corrupted_mixing(eps: f64, sigma2: f64, outlier: NoiseModel) -> Result<Self> {
        Self::check_eps(eps)?;
        let d = outlier.d;
        Self::build(d, Family::CorruptedMixing { eps, sigma2, outlier: Box::new(outlier) })
    }

    pub fn linear_transform(a: Mat, base: NoiseModel) -> Result<Self> {
        if a.ncols() != base.d {
            return param("transform columns must match the base dimension");
        }
        let d = a.nrows();
        Self::build(d, Family::LinearTransform { a, base: Box::new(base) })
    }

    pub fn with_theta(mut self, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != self.d {
            return param(format!("theta has length {} but d = {}", theta.len(), self.d));
        }
        self.theta = theta;
        Ok(self)
    }

    pub fn with_scaling(mut self, scaling: Scaling) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn scaling(&self) -> Scaling {
        self.scaling
    }

    /// Multiplier applied to the centred part.
    pub fn scale_factor(&self) -> f64 {
        match self.scaling {
            Scaling::Standard => 1.0,
            Scaling::Pinsker => 1.0 / (self.d as f64).sqrt(),
        }
    }

    pub fn name(&self) -> String {
        let base = match &self.family {
            Family::GaussianIso { .. } => "gaussian".to_string(),
            Family::StudentT { k, .. } => format!("student(k={k})"),
            Family::SphereUniform { .. } => "sphere".into(),
            Family::BallUniform { .. } => "ball".into(),
            Family::ProductIid { law } => format!("product-{}", law.name()),
            Family::Elliptical(e) => format!("elliptical-{}", e.generator.name()),
            Family::FiniteSupport { points } => format!("finite({})", points.len()),
            Family::Mixture { components, .. } => format!("mixture({})", components.len()),
            Family::CorruptedAdditive { eps, outlier, .. } => format!("additive(eps={eps},{})", outlier.name()),
            Family::CorruptedMixing { eps, outlier, .. } => format!("mixing(eps={eps},{})", outlier.name()),
            Family::LinearTransform { base, .. } => format!("linear({})", base.name()),
        };
        match self.scaling {
            Scaling::Standard => base,
            Scaling::Pinsker => format!("{base}/pinsker"),
        }
    }

    /// Coordinate variance when the covariance is a multiple of the identity.
    pub fn sigma2(&self) -> Option<f64> {
        self.cov().ok()?.as_scalar()
    }

    // ---------------------------------------------------------------- sampling

    /// Writes a draw of the centred part `Y` into `out`.
    pub fn sample_centered(&self, rng: &mut Rng, out: &mut [f64]) {
        let d = self.d;
        match &self.family {
            Family::GaussianIso { sigma2 } => {
                let s = sigma2.sqrt();
                out.iter_mut().for_each(|v| *v = s * rng.sample::<f64, _>(StandardNormal));
            }
            Family::StudentT { k, scale2 } => {
                let g: f64 = Gamma::new(k / 2.0, 2.0 / k).expect("valid gamma").sample(rng);
                let s = (scale2 / g).sqrt();
                out.iter_mut().for_each(|v| *v = s * rng.sample::<f64, _>(StandardNormal));
            }
            Family::SphereUniform { sigma } => {
                fill_sphere(rng, out);
                let r = sigma * (d as f64).sqrt();
                out.iter_mut().for_each(|v| *v *= r);
            }
            Family::BallUniform { sigma } => {
                fill_sphere(rng, out);
                let r = sigma * (d as f64).sqrt() * rng.random::<f64>().powf(1.0 / d as f64);
                out.iter_mut().for_each(|v| *v *= r);
            }
            Family::ProductIid { law } => out.iter_mut().for_each(|v| *v = law.sample(rng)),
            Family::Elliptical(e) => e.sample(rng, out),
            Family::FiniteSupport { points } => {
                let p = &points[rng.random_range(0..points.len())];
                out.copy_from_slice(p);
            }
            Family::Mixture { components, weights, offsets } => {
                let s = pick(rng, weights);
                components[s].sample_centered(rng, out);
                for (o, v) in out.iter_mut().zip(&offsets[s]) {
                    *o += v;
                }
            }
            Family::CorruptedAdditive { eps, sigma2, outlier } => {
                outlier.sample_centered(rng, out);
                let a = ((1.0 - eps) * sigma2).sqrt();
                let b = eps.sqrt();
                out.iter_mut()
                    .for_each(|v| *v = a * rng.sample::<f64, _>(StandardNormal) + b * *v);
            }
            Family::CorruptedMixing { eps, sigma2, outlier } => {
                if rng.random::<f64>() < *eps {
                    outlier.sample_centered(rng, out);
                } else {
                    let s = sigma2.sqrt();
                    out.iter_mut().for_each(|v| *v = s * rng.sample::<f64, _>(StandardNormal));
                }
            }
            Family::LinearTransform { a, base } => {
                let mut u = vec![0.0; base.d];
                base.sample_centered(rng, &mut u);
                a.mul_vec(&u, out);
            }
        }
        if self.scaling == Scaling::Pinsker {
            let c = self.scale_factor();
            out.iter_mut().for_each(|v| *v *= c);
        }
    }

    /// Writes a draw of `X = θ + Y` into `out`.
    pub fn sample_into(&self, rng: &mut Rng, out: &mut [f64]) {
        self.sample_centered(rng, out);
        for (o, t) in out.iter_mut().zip(&self.theta) {
            *o += t;
        }
    }

    /// `n` i.i.d. draws of `X`; replicate `r` uses the stream `(seed, r)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        if n == 0 {
            return param("sample size must be at least 1");
        }
        mc::collect(n as u64, seed, |rng| {
            let mut x = vec![0.0; self.d];
            self.sample_into(rng, &mut x);
            Ok(x)
        })
    }

    // ----------------------------------------------------------------- moments

    fn unscaled_cov(&self) -> Result<Mat> {
        let d = self.d;
        Ok(match &self.family {
            Family::GaussianIso { sigma2 } => Mat::scalar(d, *sigma2),
            Family::StudentT { k, scale2 } => Mat::scalar(d, scale2 * k / (k - 2.0)),
            Family::SphereUniform { sigma } => Mat::scalar(d, sigma * sigma),
            Family::BallUniform { sigma } => Mat::scalar(d, sigma * sigma * d as f64 / (d as f64 + 2.0)),
            Family::ProductIid { law } => Mat::scalar(d, law.variance()),
            Family::Elliptical(e) => e.cov()?,
            Family::FiniteSupport { points } => {
                let n = points.len() as f64;
                let m = nalgebra::DMatrix::from_fn(d, d, |i, j| {
                    points.iter().map(|p| p[i] * p[j]).sum::<f64>() / n
                });
                simplify(Mat::Dense(m))
            }
            Family::Mixture { components, weights, offsets } => {
                let mut acc: Option<Mat> = None;
                for ((c, w), off) in components.iter().zip(weights).zip(offsets) {
                    let mut term = c.cov()?;
                    if off.iter().any(|v| *v != 0.0) {
                        let outer = nalgebra::DMatrix::from_fn(d, d, |i, j| off[i] * off[j]);
                        term = term.add(&Mat::Dense(outer));
                    }
                    let term = term.scale(*w);
                    acc = Some(match acc {
                        None => term,
                        Some(a) => a.add(&term),
                    });
                }
                simplify(acc.expect("nonempty mixture"))
            }
            Family::CorruptedAdditive { eps, sigma2, outlier }
            | Family::CorruptedMixing { eps, sigma2, outlier } => {
                Mat::scalar(d, (1.0 - eps) * sigma2).add(&outlier.cov()?.scale(*eps))
            }
            Family::LinearTransform { a, base } => simplify(a.congruence(&base.cov()?)),
        })
    }

    pub fn cov(&self) -> Result<Mat> {
        let c = self.scale_factor();
        Ok(self.unscaled_cov()?.scale(c * c))
    }

    /// `E[Y_i^p]` for even `p` (odd moments vanish for every family here).
    pub fn coord_moment(&self, i: usize, p: u32) -> Result<f64> {
        if p % 2 == 1 {
            return Ok(0.0);
        }
        if p == 0 {
            return Ok(1.0);
        }
        let c = self.scale_factor().powi(p as i32);
        let d = self.d;
        let pf = f64::from(p);
        let unavailable = |what: &str| Err(Error::MomentUnavailable(format!("{what} for {}", self.name())));
        let v = match &self.family {
            Family::GaussianIso { sigma2 } => normal_moment(p) * sigma2.powf(pf / 2.0),
            Family::StudentT { k, scale2 } => {
                let g = gamma_inverse_moment(k / 2.0, k / 2.0, pf / 2.0);
                if !g.is_finite() {
                    return unavailable(&format!("moment of order {p} with k = {k}"));
                }
                normal_moment(p) * scale2.powf(pf / 2.0) * g
            }
            Family::SphereUniform { sigma } => {
                (sigma * sigma * d as f64).powf(pf / 2.0) * sphere_coord_moment(d, p)
            }
            Family::BallUniform { sigma } => {
                let r2 = sigma * sigma * d as f64;
                r2.powf(pf / 2.0) * d as f64 / (d as f64 + pf) * sphere_coord_moment(d, p)
            }
            Family::ProductIid { law } => law.even_moment(p),
            Family::Elliptical(e) => {
                e.dispersion.diag_entry(i).powf(pf / 2.0) * e.radius_moment(p)? * sphere_coord_moment(d, p)
            }
            Family::FiniteSupport { points } => {
                points.iter().map(|q| q[i].powi(p as i32)).sum::<f64>() / points.len() as f64
            }
            Family::Mixture { components, weights, offsets } => {
                let mut acc = 0.0;
                for ((comp, w), off) in components.iter().zip(weights).zip(offsets) {
                    let mut m = 0.0;
                    for j in (0..=p).step_by(2) {
                        m += binomial(p, j) * off[i].powi((p - j) as i32) * comp.coord_moment(i, j)?;
                    }
                    acc += w * m;
                }
                acc
            }
            Family::CorruptedAdditive { eps, sigma2, outlier } => {
                let mut acc = 0.0;
                for j in (0..=p).step_by(2) {
                    let g = normal_moment(j) * ((1.0 - eps) * sigma2).powf(f64::from(j) / 2.0);
                    acc += binomial(p, j) * g * eps.powf(f64::from(p - j) / 2.0) * outlier.coord_moment(i, p - j)?;
                }
                acc
            }
            Family::CorruptedMixing { eps, sigma2, outlier } => {
                (1.0 - eps) * normal_moment(p) * sigma2.powf(pf / 2.0) + eps * outlier.coord_moment(i, p)?
            }
            Family::LinearTransform { a, base } => {
                let var = a.congruence(&base.cov()?).diag_entry(i);
                match (&base.family, p) {
                    (_, 2) => var,
                    (Family::GaussianIso { .. }, _) => normal_moment(p) * var.powf(pf / 2.0),
                    (Family::ProductIid { law }, 4) if base.scaling == Scaling::Standard => {
                        let s2 = law.variance();
                        let excess = law.even_moment(4) - 3.0 * s2 * s2;
                        let row = a.row(i);
                        3.0 * var * var + excess * row.iter().map(|x| x.powi(4)).sum::<f64>()
                    }
                    _ => return unavailable(&format!("coordinate moment of order {p}")),
                }
            }
        };
        Ok(c * v)
    }

    pub fn moments(&self) -> Result<MomentSummary> {
        let cov = self.cov()?;
        let sup = |p: u32| -> Option<f64> {
            let mut best: f64 = 0.0;
            for i in 0..self.d {
                best = best.max(self.coord_moment(i, p).ok()?);
            }
            Some(best)
        };
        Ok(MomentSummary {
            mean: self.theta.clone(),
            trace_cov: cov.trace(),
            kappa: cov.max_eigenvalue(),
            cov,
            c4: sup(4),
            c8: sup(8),
        })
    }

    // ----------------------------------------------------------------- density

    /// Log density of the centred part at `y`.
    pub fn log_density_centered(&self, y: &[f64]) -> Result<f64> {
        let d = self.d;
        if self.scaling == Scaling::Pinsker {
            let c = self.scale_factor();
            let z: Vec<f64> = y.iter().map(|v| v / c).collect();
            let base = self.clone().with_scaling(Scaling::Standard);
            return Ok(base.log_density_centered(&z)? - d as f64 * c.ln());
        }
        let unavailable = || Err(Error::DensityUnavailable(format!("{} has no Lebesgue density", self.name())));
        match &self.family {
            Family::GaussianIso { sigma2 } => {
                if *sigma2 == 0.0 {
                    return unavailable();
                }
                Ok(-0.5 * d as f64 * (2.0 * std::f64::consts::PI * sigma2).ln() - norm2(y) / (2.0 * sigma2))
            }
            Family::StudentT { k, scale2 } => {
                let e = Elliptical::new(Generator::Student { k: *k }, Mat::scalar(d, *scale2))?;
                Ok(e.log_density(y))
            }
            Family::SphereUniform { .. } | Family::FiniteSupport { .. } => unavailable(),
            Family::BallUniform { sigma } => {
                let r = sigma * (d as f64).sqrt();
                if norm2(y) <= r * r {
                    Ok(-ln_ball_volume(d, r))
                } else {
                    Ok(f64::NEG_INFINITY)
                }
            }
            Family::ProductIid { law } => {
                let mut acc = 0.0;
                for v in y {
                    acc += law.density(*v)?.ln();
                }
                Ok(acc)
            }
            Family::Elliptical(e) => Ok(e.log_density(y)),
            Family::Mixture { components, weights, offsets } => {
                let mut terms = Vec::with_capacity(components.len());
                for ((c, w), off) in components.iter().zip(weights).zip(offsets) {
                    if *w == 0.0 {
                        continue;
                    }
                    let z: Vec<f64> = y.iter().zip(off).map(|(a, b)| a - b).collect();
                    terms.push(w.ln() + c.log_density_centered(&z)?);
                }
                Ok(log_sum_exp(&terms))
            }
            Family::CorruptedMixing { eps, sigma2, outlier } => {
                let g = NoiseModel::gaussian(d, *sigma2)?.log_density_centered(y)?;
                if *eps == 0.0 {
                    return Ok(g);
                }
                let o = outlier.log_density_centered(y)?;
                if *eps == 1.0 {
                    return Ok(o);
                }
                Ok(log_sum_exp(&[(1.0 - eps).ln() + g, eps.ln() + o]))
            }
            Family::CorruptedAdditive { eps, sigma2, outlier } => match outlier.family {
                Family::GaussianIso { sigma2: s1 } if outlier.scaling == Scaling::Standard => {
                    NoiseModel::gaussian(d, (1.0 - eps) * sigma2 + eps * s1)?.log_density_centered(y)
                }
                _ if *eps == 0.0 => NoiseModel::gaussian(d, *sigma2)?.log_density_centered(y),
                _ => unavailable(),
            },
            Family::LinearTransform { a, base } => {
                if !a.is_square() {
                    return unavailable();
                }
                let inv = a.inverse()?;
                let mut z = vec![0.0; d];
                inv.mul_vec(y, &mut z);
                let ln_det = a.to_dense().determinant().abs().ln();
                Ok(base.log_density_centered(&z)? - ln_det)
            }
        }
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let y: Vec<f64> = x.iter().zip(&self.theta).map(|(a, b)| a - b).collect();
        self.log_density_centered(&y)
    }

    // ---------------------------------------------------------------- validity

    /// Whether the centred law has a density bounded everywhere.
    fn bounded_density(&self) -> std::result::Result<(), String> {
        match &self.family {
            Family::GaussianIso { sigma2 } if *sigma2 > 0.0 => Ok(()),
            Family::GaussianIso { .. } => Err("degenerate gaussian has no density".into()),
            Family::StudentT { .. } | Family::BallUniform { .. } => Ok(()),
            Family::SphereUniform { .. } => Err("sphere law has no density".into()),
            Family::FiniteSupport { .. } => Err("finitely supported law has no density".into()),
            Family::ProductIid { law } => {
                if law.has_density() {
                    Ok(())
                } else {
                    Err(format!("{} coordinates have no density", law.name()))
                }
            }
            Family::Elliptical(e) => {
                if e.generator.phi(0.0, e.d).is_finite() {
                    Ok(())
                } else {
                    Err("generator unbounded at the origin".into())
                }
            }
            Family::Mixture { components, .. } => {
                components.iter().try_for_each(|c| c.bounded_density())
            }
            Family::CorruptedAdditive { eps, sigma2, outlier } => {
                if *eps < 1.0 && *sigma2 > 0.0 {
                    Ok(())
                } else {
                    outlier.bounded_density()
                }
            }
            Family::CorruptedMixing { eps, outlier, sigma2 } => {
                if *sigma2 <= 0.0 && *eps < 1.0 {
                    return Err("degenerate gaussian component".into());
                }
                if *eps > 0.0 {
                    outlier.bounded_density()
                } else {
                    Ok(())
                }
            }
            Family::LinearTransform { a, base } => {
                if !a.is_square() || a.inverse().is_err() {
                    return Err("linear map is not invertible".into());
                }
                base.bounded_density()
            }
        }
    }

    fn is_gaussian(&self) -> bool {
        match &self.family {
            Family::GaussianIso { .. } => true,
            Family::ProductIid { law: UnivariateLaw::Gaussian { .. } } => true,
            Family::Elliptical(e) => matches!(e.generator, Generator::Gaussian),
            Family::CorruptedMixing { eps, .. } => *eps == 0.0,
            Family::CorruptedAdditive { eps, outlier, .. } => *eps == 0.0 || outlier.is_gaussian(),
            Family::LinearTransform { base, .. } => base.is_gaussian(),
            Family::Mixture { components, offsets, .. } => {
                components.len() == 1 && components[0].is_gaussian() && offsets[0].iter().all(|v| *v == 0.0)
            }
            _ => false,
        }
    }

    /// `E[Y_i | Y^{¬i}] = 0` for all `i`, declared per family.
    fn conditional_mean_zero(&self) -> std::result::Result<(), String> {
        match &self.family {
            Family::Elliptical(e) if !e.dispersion.is_diagonal() => {
                Err("elliptical law with non-diagonal dispersion".into())
            }
            Family::FiniteSupport { points } => {
                for i in 0..self.d {
                    for p in points {
                        let s: f64 = points
                            .iter()
                            .filter(|q| (0..self.d).all(|j| j == i || (q[j] - p[j]).abs() < 1e-12))
                            .map(|q| q[i])
                            .sum();
                        if s.abs() > 1e-12 {
                            return Err(format!("coordinate {i} has nonzero conditional mean"));
                        }
                    }
                }
                Ok(())
            }
            Family::Mixture { components, offsets, .. } => {
                if offsets.iter().flatten().any(|v| *v != 0.0) {
                    return Err("mixture components with different locations".into());
                }
                components.iter().try_for_each(|c| c.conditional_mean_zero())
            }
            Family::CorruptedAdditive { outlier, .. } | Family::CorruptedMixing { outlier, .. } => {
                outlier.conditional_mean_zero()
            }
            Family::LinearTransform { base, .. } => base.conditional_mean_zero(),
            _ => Ok(()),
        }
    }

    /// Radius `ρ` with the support of every `X^i` inside the ball of radius
    /// `ρ` around `θ`, when the centred support is bounded.
    fn zero_bias_support_radius(&self) -> Option<f64> {
        let c = self.scale_factor();
        match &self.family {
            Family::SphereUniform { sigma } | Family::BallUniform { sigma } => {
                Some(c * sigma * (self.d as f64).sqrt())
            }
            Family::LinearTransform { a, base } => {
                let op = a.transpose().mul(a).max_eigenvalue().sqrt();
                base.zero_bias_support_radius().map(|r| c * op * r)
            }
            _ => None,
        }
    }

    pub fn validity_check(&self, need: Need) -> ValidityReport {
        let mut r = ValidityReport::default();
        match need {
            Need::Kernel => {
                if self.d < 5 {
                    r.reasons.push("d < 5".into());
                    if self.is_gaussian() && self.d >= 3 {
                        r.warnings.push("the gaussian identity with g0 already holds for d >= 3".into());
                    }
                }
                if let Err(e) = self.bounded_density() {
                    r.reasons.push(format!("density not bounded near the origin: {e}"));
                }
            }
            Need::ZeroBias => {
                if let Err(e) = self.conditional_mean_zero() {
                    if matches!(self.family, Family::LinearTransform { .. }) {
                        r.warnings.push(format!("zero-bias vectors come from the linear-map construction ({e})"));
                    } else {
                        r.reasons.push(format!("conditional mean zero property fails: {e}"));
                    }
                }
                let density_route = self.d >= 5 && self.bounded_density().is_ok();
                let support_route = self.support_separated();
                if !density_route && !support_route {
                    if self.d < 5 {
                        r.reasons.push("d < 5".into());
                    }
                    if let Err(e) = self.bounded_density() {
                        r.reasons.push(e);
                    }
                    r.reasons.push("support of the zero-bias laws is not bounded away from the origin".into());
                }
            }
        }
        r.ok = r.reasons.is_empty();
        r
    }

    fn support_separated(&self) -> bool {
        if let Some(rho) = self.zero_bias_support_radius() {
            return norm2(&self.theta).sqrt() > rho;
        }
        if let Family::FiniteSupport { points } = &self.family {
            let tol = 1e-12;
            return points.iter().all(|p| {
                p.iter().zip(&self.theta).filter(|(y, t)| (*y + *t).abs() > tol).count() >= 2
            });
        }
        false
    }
}

fn simplify(m: Mat) -> Mat {
    if let Some(c) = m.as_scalar() {
        return Mat::scalar(m.nrows(), c);
    }
    if m.is_diagonal() {
        return Mat::Diag((0..m.nrows()).map(|i| m.get(i, i)).collect());
    }
    m
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub(crate) fn fill_sphere(rng: &mut Rng, out: &mut [f64]) {
    loop {
        let mut s = 0.0;
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
            s += *v * *v;
        }
        if s > 0.0 {
            let inv = 1.0 / s.sqrt();
            out.iter_mut().for_each(|v| *v *= inv);
            return;
        }
    }
}

pub(crate) fn pick(rng: &mut Rng, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Location specification accepted on the command line and in configs.
#[derive(Debug, Clone, PartialEq)]
pub enum ThetaSpec {
    Zero,
    /// `θ_i = c/√d`, hence `‖θ‖ = c`.
    Scaled(f64),
    Explicit(Vec<f64>),
}

impl ThetaSpec {
    /// Parses `zero`, `scaled:c`, or a path to a file with one value per line.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "zero" {
            return Ok(ThetaSpec::Zero);
        }
        if let Some(c) = s.strip_prefix("scaled:") {
            return c
                .trim()
                .parse::<f64>()
                .map(ThetaSpec::Scaled)
                .map_err(|e| Error::Parameter(format!("bad theta scale {c:?}: {e}")));
        }
        let text = std::fs::read_to_string(s)
            .map_err(|e| Error::Parameter(format!("cannot read theta file {s:?}: {e}")))?;
        Self::parse_values(&text)
    }

    pub fn parse_values(text: &str) -> Result<Self> {
        let mut v = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            v.push(
                line.parse::<f64>()
                    .map_err(|e| Error::Parameter(format!("bad theta entry {line:?}: {e}")))?,
            );
        }
        Ok(ThetaSpec::Explicit(v))
    }

    pub fn resolve(&self, d: usize) -> Result<Vec<f64>> {
        match self {
            ThetaSpec::Zero => Ok(vec![0.0; d]),
            ThetaSpec::Scaled(c) => Ok(vec![c / (d as f64).sqrt(); d]),
            ThetaSpec::Explicit(v) if v.len() == d => Ok(v.clone()),
            ThetaSpec::Explicit(v) => param(format!("theta file has {} entries but d = {d}", v.len())),
        }
    }
}
