//! Elliptical laws with density `κ |Υ|^{-1/2} φ(yᵀΥ^{-1}y / 2)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::tabulated::{TabulatedCdf, GRID_POINTS};
use crate::error::{param, Error, Result};
use crate::mat::Mat;
use crate::mc::Rng;
use crate::quadrature::{integrate_to_inf, DEFAULT_REL_TOL};
use crate::special::{gamma_inverse_moment, ln_gamma};

pub type GeneratorFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Density generator `φ` of an elliptical family.
#[derive(Clone)]
pub enum Generator {
    /// `φ(t) = e^{-t}`
    Gaussian,
    /// `φ(t) = (1 + 2t/k)^{-(k+d)/2}`
    Student { k: f64 },
    /// `φ(t) = (1 + t)^{-a}`
    PowerLaw { a: f64 },
    /// Arbitrary generator; tails and normalisers by quadrature.
    Custom { name: String, phi: GeneratorFn },
}

impl fmt::Debug for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Gaussian => write!(f, "Gaussian"),
            Generator::Student { k } => write!(f, "Student {{ k: {k} }}"),
            Generator::PowerLaw { a } => write!(f, "PowerLaw {{ a: {a} }}"),
            Generator::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

impl Generator {
    pub fn custom(name: impl Into<String>, phi: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Generator::Custom { name: name.into(), phi: Arc::new(phi) }
    }

    pub fn name(&self) -> String {
        match self {
            Generator::Gaussian => "gaussian".into(),
            Generator::Student { k } => format!("student(k={k})"),
            Generator::PowerLaw { a } => format!("power(a={a})"),
            Generator::Custom { name, .. } => name.clone(),
        }
    }

    pub fn phi(&self, t: f64, d: usize) -> f64 {
        match self {
            Generator::Gaussian => (-t).exp(),
            Generator::Student { k } => (1.0 + 2.0 * t / k).powf(-(k + d as f64) / 2.0),
            Generator::PowerLaw { a } => (1.0 + t).powf(-a),
            Generator::Custom { phi, .. } => phi(t),
        }
    }

    /// `∫_t^∞ φ(u) du`.
    pub fn tail(&self, t: f64, d: usize) -> Result<f64> {
        match self {
            Generator::Gaussian => Ok((-t).exp()),
            Generator::Student { k } => {
                let p = (k + d as f64) / 2.0;
                Ok(0.5 * k * (1.0 + 2.0 * t / k).powf(1.0 - p) / (p - 1.0))
            }
            Generator::PowerLaw { a } => Ok((1.0 + t).powf(1.0 - a) / (a - 1.0)),
            Generator::Custom { phi, .. } => Ok(integrate_to_inf(|u| phi(u), t, DEFAULT_REL_TOL)?.value),
        }
    }

    /// Scalar kernel factor `φ(t)^{-1} ∫_t^∞ φ` at `t = q/2`.
    pub fn kernel_factor(&self, q: f64, d: usize) -> Result<f64> {
        let t = 0.5 * q;
        match self {
            Generator::Gaussian => Ok(1.0),
            Generator::Student { k } => Ok((q + k) / (d as f64 + k - 2.0)),
            Generator::PowerLaw { a } => Ok((1.0 + t) / (a - 1.0)),
            Generator::Custom { .. } => {
                let p = self.phi(t, d);
                if !(p > 0.0) {
                    return Err(Error::Evaluation(format!(
                        "generator vanishes at t = {t}, outside the effective support"
                    )));
                }
                Ok(self.tail(t, d)? / p)
            }
        }
    }

    /// `ln ∫_0^∞ t^{s-1} φ(t) dt`, infinite when divergent.
    fn ln_mellin(&self, s: f64, d: usize) -> Result<f64> {
        match self {
            Generator::Gaussian => Ok(ln_gamma(s)),
            Generator::Student { k } => {
                let p = (k + d as f64) / 2.0;
                if s >= p {
                    return Ok(f64::INFINITY);
                }
                Ok(s * (k / 2.0).ln() + ln_beta(s, p - s))
            }
            Generator::PowerLaw { a } => {
                if s >= *a {
                    return Ok(f64::INFINITY);
                }
                Ok(ln_beta(s, a - s))
            }
            Generator::Custom { phi, .. } => {
                let f = |t: f64| if t == 0.0 { 0.0 } else { t.powf(s - 1.0) * phi(t) };
                let head = crate::quadrature::integrate(f, 0.0, 1.0, DEFAULT_REL_TOL)?.value;
                let tail = integrate_to_inf(f, 1.0, DEFAULT_REL_TOL)?.value;
                Ok((head + tail).ln())
            }
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            Generator::Gaussian => Ok(()),
            Generator::Student { k } if *k > 2.0 => Ok(()),
            Generator::PowerLaw { a } if *a > d as f64 / 2.0 + 1.0 => Ok(()),
            Generator::Custom { phi, .. } => {
                if !phi(0.0).is_finite() || phi(0.0) < 0.0 {
                    return param("generator must be finite and nonnegative at 0");
                }
                Ok(())
            }
            _ => param(format!("generator {self:?} has no finite covariance in dimension {d}")),
        }
    }
}

#[derive(Debug, Clone)]
enum Radial {
    Gaussian,
    Student { k: f64 },
    /// `t = G₁/G₂` with `G₁ ~ Γ(d/2)`, `G₂ ~ Γ(a − d/2)`.
    BetaPrime { a: f64 },
    /// Tabulated law of `s = t/(c + t)`.
    Table { table: TabulatedCdf, c: f64 },
}

/// An elliptical centred law in dimension `d`.
#[derive(Debug, Clone)]
pub struct Elliptical {
    pub generator: Generator,
    pub d: usize,
    pub dispersion: Mat,
    chol: Mat,
    precision: Mat,
    log_det: f64,
    ln_kappa: f64,
    radial: Radial,
}

impl Elliptical {
    pub fn new(generator: Generator, dispersion: Mat) -> Result<Self> {
        dispersion.check_psd("dispersion")?;
        let d = dispersion.nrows();
        generator.validate(d)?;
        let chol = dispersion.cholesky()?;
        let precision = dispersion.inverse()?;
        let log_det = dispersion.log_det()?;
        let half = d as f64 / 2.0;
        let ln_area = std::f64::consts::LN_2 + half * PI.ln() - ln_gamma(half);
        let ln_kappa = -(ln_area + (half - 1.0) * std::f64::consts::LN_2 + generator.ln_mellin(half, d)?);
        let radial = match &generator {
            Generator::Gaussian => Radial::Gaussian,
            Generator::Student { k } => Radial::Student { k: *k },
            Generator::PowerLaw { a } => Radial::BetaPrime { a: *a },
            Generator::Custom { .. } => {
                let c = half.max(1.0);
                let g = generator.clone();
                let table = TabulatedCdf::from_density(
                    |s| {
                        if s <= 0.0 || s >= 1.0 {
                            return 0.0;
                        }
                        let t = c * s / (1.0 - s);
                        t.powf(half - 1.0) * g.phi(t, d) * c / ((1.0 - s) * (1.0 - s))
                    },
                    0.0,
                    1.0,
                    GRID_POINTS,
                )?;
                Radial::Table { table, c }
            }
        };
        Ok(Elliptical { generator, d, dispersion, chol, precision, log_det, ln_kappa, radial })
    }

    /// `yᵀ Υ^{-1} y`
    pub fn quad(&self, y: &[f64]) -> f64 {
        self.precision.quad_form(y)
    }

    pub fn log_density(&self, y: &[f64]) -> f64 {
        let t = 0.5 * self.quad(y);
        self.ln_kappa - 0.5 * self.log_det + self.generator.phi(t, self.d).ln()
    }

    /// `E[t^j]` for `t = yᵀΥ^{-1}y / 2`.
    pub fn radial_moment(&self, j: f64) -> Result<f64> {
        let half = self.d as f64 / 2.0;
        let v = match &self.generator {
            Generator::Gaussian => (ln_gamma(half + j) - ln_gamma(half)).exp(),
            Generator::Student { k } => {
                (ln_gamma(half + j) - ln_gamma(half)).exp() * gamma_inverse_moment(k / 2.0, k / 2.0, j)
            }
            _ => (self.generator.ln_mellin(half + j, self.d)? - self.generator.ln_mellin(half, self.d)?).exp(),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::MomentUnavailable(format!(
                "radial moment of order {j} diverges for {:?}",
                self.generator
            )))
        }
    }

    /// `E[‖Υ^{-1/2}Y‖^p] = 2^{p/2} E[t^{p/2}]`.
    pub fn radius_moment(&self, p: u32) -> Result<f64> {
        let j = f64::from(p) / 2.0;
        Ok(2f64.powf(j) * self.radial_moment(j)?)
    }

    pub fn cov(&self) -> Result<Mat> {
        Ok(self.dispersion.scale(self.radius_moment(2)? / self.d as f64))
    }

    pub fn sample(&self, rng: &mut Rng, out: &mut [f64]) {
        let mut z = vec![0.0; self.d];
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let scale = match &self.radial {
            Radial::Gaussian => 1.0,
            Radial::Student { k } => {
                let g: f64 = Gamma::new(k / 2.0, 2.0 / k).expect("valid gamma").sample(rng);
                1.0 / g.sqrt()
            }
            Radial::BetaPrime { a } => {
                let half = self.d as f64 / 2.0;
                let g1: f64 = Gamma::new(half, 1.0).expect("valid gamma").sample(rng);
                let g2: f64 = Gamma::new(a - half, 1.0).expect("valid gamma").sample(rng);
                let r = (2.0 * g1 / g2).sqrt();
                r / norm(&z)
            }
            Radial::Table { table, c } => {
                let s = table.sample(rng);
                let t = c * s / (1.0 - s);
                (2.0 * t).sqrt() / norm(&z)
            }
        };
        z.iter_mut().for_each(|v| *v *= scale);
        self.chol.mul_vec(&z, out);
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
