//! Multivariate zero-bias laws and couplings.
//!
//! A coupling produces a centred draw `Y` together with vectors `Y^{ij}`
//! for every pair `(i, j)` with `σ_ij ≠ 0`, such that
//! `E⟨Y, f(θ+Y)⟩ = Σ_ij σ_ij E[∂_j f_i(θ + Y^{ij})]`.
//! Couplings are centred; the location `θ` always comes from the model.

use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{param, Error, Result};
use crate::fields::VectorField;
use crate::mat::Mat;
use crate::mc::{self, RiskReport, Rng};
use crate::noise_models::{fill_sphere, pick, Family, NoiseModel, Need, Scaling, TabulatedCdf, UnivariateLaw, GRID_POINTS};
use crate::quadrature::{integrate_to_inf, DEFAULT_REL_TOL};
use crate::stein_kernels::{Density1d, SINGULAR_FRACTION};

/// Candidate pool size for sampling-importance-resampling.
pub const SIR_POOL: usize = 64;

/// Zero-bias density of a one-dimensional law, `σ^{-2} ∫_y^∞ u p(u) du`.
pub fn zb1d(density: Density1d, variance: f64) -> Result<Density1d> {
    if !(variance > 0.0 && variance.is_finite()) {
        return param("zero-bias density needs a finite positive variance");
    }
    Ok(Arc::new(move |y: f64| {
        let p = density.clone();
        match integrate_to_inf(move |u| u * p(u), y, DEFAULT_REL_TOL) {
            Ok(q) => (q.value / variance).max(0.0),
            Err(_) => f64::NAN,
        }
    }))
}

/// Closed-form zero-bias density of a library law.
pub fn zb1d_law(law: UnivariateLaw) -> Density1d {
    Arc::new(move |y| law.zero_bias_density(y))
}

pub type DensityNd = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// The density `p^i` of `X^i`, as a function of `x`.
#[derive(Clone)]
pub struct ZeroBiasDensity {
    pub i: usize,
    pub eval: DensityNd,
}

pub fn zb_density(model: &NoiseModel, i: usize) -> Result<ZeroBiasDensity> {
    let d = model.d();
    if i >= d {
        return param(format!("coordinate {i} out of range for d = {d}"));
    }
    let theta = model.theta().to_vec();
    let var = model.cov()?.diag_entry(i);
    if !(var > 0.0) {
        return param(format!("coordinate {i} has zero variance"));
    }
    if model.scaling() == Scaling::Standard {
        if let Family::ProductIid { law } = model.family() {
            let law = *law;
            law.density(0.0)?;
            return Ok(ZeroBiasDensity {
                i,
                eval: Arc::new(move |x: &[f64]| {
                    let mut p = 1.0;
                    for (j, (xj, tj)) in x.iter().zip(&theta).enumerate() {
                        let y = xj - tj;
                        p *= if j == i { law.zero_bias_density(y) } else { law.density(y).unwrap_or(0.0) };
                    }
                    p
                }),
            });
        }
        if let Family::GaussianIso { .. } = model.family() {
            let m = model.clone();
            return Ok(ZeroBiasDensity { i, eval: Arc::new(move |x: &[f64]| m.log_density(x).map(f64::exp).unwrap_or(0.0)) });
        }
    }
    let centered = model.clone().with_theta(vec![0.0; d])?;
    centered.log_density_centered(&vec![0.0; d])?;
    if !centered.validity_check(Need::ZeroBias).reasons.iter().all(|r| r.starts_with("d < 5")) {
        return Err(Error::DensityUnavailable(format!("domination condition not established for {}", model.name())));
    }
    Ok(ZeroBiasDensity {
        i,
        eval: Arc::new(move |x: &[f64]| {
            let mut y: Vec<f64> = x.iter().zip(&theta).map(|(a, b)| a - b).collect();
            let start = y[i];
            let m = &centered;
            let q = integrate_to_inf(
                |u| {
                    let mut z = y.clone();
                    z[i] = u;
                    u * m.log_density_centered(&z).map(f64::exp).unwrap_or(0.0)
                },
                start,
                DEFAULT_REL_TOL,
            );
            y[i] = start;
            q.map(|q| (q.value / var).max(0.0)).unwrap_or(f64::NAN)
        }),
    })
}

/// Centred joint draw `(Y, Y^{ij})`.
#[derive(Debug, Clone, Default)]
pub struct JointDraw {
    pub y: Vec<f64>,
    /// One vector per pair, or a single vector shared by all pairs.
    pub zb: Vec<Vec<f64>>,
    pub shared: bool,
}

impl JointDraw {
    pub fn new(d: usize, pairs: usize) -> Self {
        JointDraw { y: vec![0.0; d], zb: vec![vec![0.0; d]; pairs.max(1)], shared: false }
    }

    pub fn pair(&self, p: usize) -> &[f64] {
        if self.shared {
            &self.zb[0]
        } else {
            &self.zb[p]
        }
    }

    fn set_shared(&mut self, shared: bool) {
        self.shared = shared;
    }
}

#[derive(Debug, Clone)]
enum SquareBias {
    /// Independent coordinates: tabulated square-biased law for coordinate `i`.
    Product { law: UnivariateLaw, table: Option<TabulatedCdf> },
    /// Exact rejection with weight `y_i² / bound`.
    Rejection { model: NoiseModel, bound: f64 },
    /// Exact reweighting of a finite support.
    Finite { points: Vec<Vec<f64>> },
    /// Sampling-importance-resampling from the model.
    Sir { model: NoiseModel },
}

impl SquareBias {
    fn for_model(model: &NoiseModel) -> Result<Self> {
        if model.scaling() == Scaling::Standard {
            match model.family() {
                Family::ProductIid { law } => return Self::product(*law),
                Family::GaussianIso { sigma2 } => return Self::product(UnivariateLaw::Gaussian { var: *sigma2 }),
                Family::FiniteSupport { points } => return Ok(SquareBias::Finite { points: points.clone() }),
                Family::SphereUniform { sigma } | Family::BallUniform { sigma } => {
                    let r2 = sigma * sigma * model.d() as f64;
                    return Ok(SquareBias::Rejection { model: model.clone(), bound: r2 });
                }
                _ => {}
            }
        }
        Ok(SquareBias::Sir { model: model.clone() })
    }

    fn product(law: UnivariateLaw) -> Result<Self> {
        let table = if let UnivariateLaw::Rademacher { .. } = law {
            None
        } else {
            let r = law.effective_radius();
            let var = law.variance();
            Some(TabulatedCdf::from_density(|y| y * y * law.density(y).unwrap_or(0.0) / var, -r, r, GRID_POINTS)?)
        };
        Ok(SquareBias::Product { law, table })
    }

    fn method(&self) -> &'static str {
        match self {
            SquareBias::Product { .. } => "tabulated-inverse-cdf",
            SquareBias::Rejection { .. } => "rejection",
            SquareBias::Finite { .. } => "exact-finite",
            SquareBias::Sir { .. } => "sir",
        }
    }

    /// Writes `Y^{□,i}` into `out`; returns the effective sample size for SIR.
    fn draw(&self, i: usize, rng: &mut Rng, out: &mut [f64]) -> Result<Option<f64>> {
        match self {
            SquareBias::Product { law, table } => {
                for (j, o) in out.iter_mut().enumerate() {
                    if j != i {
                        *o = law.sample(rng);
                    }
                }
                out[i] = match table {
                    Some(t) => t.sample(rng),
                    None => law.sample(rng),
                };
                Ok(None)
            }
            SquareBias::Rejection { model, bound } => {
                for _ in 0..1_000_000 {
                    model.sample_centered(rng, out);
                    if rng.random::<f64>() * bound < out[i] * out[i] {
                        return Ok(None);
                    }
                }
                Err(Error::Sampling("rejection sampler for the square-biased law did not accept".into()))
            }
            SquareBias::Finite { points } => {
                let w: Vec<f64> = points.iter().map(|p| p[i] * p[i]).collect();
                let total: f64 = w.iter().sum();
                if total <= 0.0 {
                    return Err(Error::Sampling(format!("coordinate {i} is identically zero")));
                }
                let probs: Vec<f64> = w.iter().map(|x| x / total).collect();
                out.copy_from_slice(&points[pick(rng, &probs)]);
                Ok(None)
            }
            SquareBias::Sir { model } => {
                let d = out.len();
                let mut pool = vec![0.0; SIR_POOL * d];
                let mut w = vec![0.0; SIR_POOL];
                for (c, wc) in w.iter_mut().enumerate() {
                    let slot = &mut pool[c * d..(c + 1) * d];
                    model.sample_centered(rng, slot);
                    *wc = slot[i] * slot[i];
                }
                let total: f64 = w.iter().sum();
                let sq: f64 = w.iter().map(|x| x * x).sum();
                if !(total > 0.0) || !total.is_finite() {
                    return Err(Error::Sampling(format!("square-bias weights degenerate (sum {total})")));
                }
                let probs: Vec<f64> = w.iter().map(|x| x / total).collect();
                let c = pick(rng, &probs);
                out.copy_from_slice(&pool[c * d..(c + 1) * d]);
                Ok(Some(total * total / sq))
            }
        }
    }
}

/// Draws from the zero-bias construction `Y^i = D_{i,U} Y^{□,i}`.
#[derive(Debug, Clone)]
pub struct ConstructDraws {
    pub draws: Vec<Vec<f64>>,
    pub method: &'static str,
    /// Mean effective sample size of the SIR pool, when SIR was used.
    pub mean_ess: Option<f64>,
}

pub fn zb_construct(model: &NoiseModel, i: usize, n: usize, seed: u64) -> Result<ConstructDraws> {
    let d = model.d();
    if i >= d {
        return param(format!("coordinate {i} out of range for d = {d}"));
    }
    if !(model.cov()?.diag_entry(i) > 0.0) {
        return param(format!("coordinate {i} has zero variance"));
    }
    let sb = SquareBias::for_model(model)?;
    let theta = model.theta();
    let res = mc::collect(n as u64, seed, |rng| {
        let mut y = vec![0.0; d];
        let ess = sb.draw(i, rng, &mut y)?;
        y[i] *= rng.random::<f64>();
        y.iter_mut().zip(theta).for_each(|(a, t)| *a += t);
        Ok((y, ess))
    })?;
    let ess: Vec<f64> = res.iter().filter_map(|r| r.1).collect();
    Ok(ConstructDraws {
        mean_ess: (!ess.is_empty()).then(|| ess.iter().sum::<f64>() / ess.len() as f64),
        draws: res.into_iter().map(|r| r.0).collect(),
        method: sb.method(),
    })
}

#[derive(Debug, Clone)]
enum Kind {
    /// Gaussian laws: `Y^{ij} = Y`.
    Fixed { model: NoiseModel },
    IndependentReplace { law: UnivariateLaw },
    SquareBiasScale { model: NoiseModel, sampler: SquareBias },
    SphereBall { radius: f64 },
    StudentGamma { k: f64, scale: f64 },
    Sum { parts: Vec<(f64, ZeroBiasCoupling)>, probs: Vec<Vec<f64>> },
    Mixture { parts: Vec<ZeroBiasCoupling>, weights: Vec<f64>, nu: Vec<Vec<f64>>, nu_is_mu: bool },
    LinearMap { a: Mat, base: Box<ZeroBiasCoupling>, mix: Vec<Vec<(usize, f64)>> },
}

#[derive(Debug, Clone)]
pub struct ZeroBiasCoupling {
    d: usize,
    weights: Mat,
    pairs: Vec<(usize, usize)>,
    kind: Kind,
}

fn diagonal_pairs(w: &Mat) -> Vec<(usize, usize)> {
    (0..w.nrows()).filter(|&i| w.get(i, i) != 0.0).map(|i| (i, i)).collect()
}

fn all_pairs(w: &Mat) -> Vec<(usize, usize)> {
    if w.is_diagonal() {
        return diagonal_pairs(w);
    }
    let d = w.nrows();
    (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).filter(|&(i, j)| w.get(i, j) != 0.0).collect()
}

impl ZeroBiasCoupling {
    fn new(d: usize, weights: Mat, kind: Kind) -> Self {
        let pairs = all_pairs(&weights);
        ZeroBiasCoupling { d, weights, pairs, kind }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Covariance weights `σ_ij`.
    pub fn weights(&self) -> &Mat {
        &self.weights
    }

    /// Pairs `(i, j)` for which `Y^{ij}` is defined.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn construction(&self) -> &'static str {
        match &self.kind {
            Kind::Fixed { .. } => "gaussian-fixed-point",
            Kind::IndependentReplace { .. } => "independent-replace",
            Kind::SquareBiasScale { .. } => "square-bias-scale",
            Kind::SphereBall { .. } => "sphere-ball",
            Kind::StudentGamma { .. } => "student-gamma",
            Kind::Sum { .. } => "sum",
            Kind::Mixture { .. } => "mixture",
            Kind::LinearMap { .. } => "linear-map",
        }
    }

    /// `P(I=i, J=j) ∝ σ_ij`, available when every weight is nonnegative.
    pub fn index_law(&self) -> Option<Vec<((usize, usize), f64)>> {
        let w: Vec<f64> = self.pairs.iter().map(|&(i, j)| self.weights.get(i, j)).collect();
        if w.iter().any(|x| *x < 0.0) {
            return None;
        }
        let total: f64 = w.iter().sum();
        Some(self.pairs.iter().copied().zip(w.into_iter().map(|x| x / total)).collect())
    }

    pub fn new_draw(&self) -> JointDraw {
        JointDraw::new(self.d, self.pairs.len())
    }

    fn pair_index(&self, i: usize, j: usize) -> Option<usize> {
        self.pairs.iter().position(|&p| p == (i, j))
    }

    /// Fills `out` with a centred joint draw.
    pub fn draw(&self, rng: &mut Rng, out: &mut JointDraw) -> Result<()> {
        match &self.kind {
            Kind::Fixed { model } => {
                model.sample_centered(rng, &mut out.y);
                out.zb[0].copy_from_slice(&out.y);
                out.set_shared(true);
            }
            Kind::IndependentReplace { law } => {
                out.y.iter_mut().for_each(|v| *v = law.sample(rng));
                for (p, &(i, _)) in self.pairs.iter().enumerate() {
                    out.zb[p].copy_from_slice(&out.y);
                    out.zb[p][i] = law.sample_zero_bias(rng);
                }
                out.set_shared(false);
            }
            Kind::SquareBiasScale { model, sampler } => {
                model.sample_centered(rng, &mut out.y);
                for (p, &(i, _)) in self.pairs.iter().enumerate() {
                    sampler.draw(i, rng, &mut out.zb[p])?;
                    out.zb[p][i] *= rng.random::<f64>();
                }
                out.set_shared(false);
            }
            Kind::SphereBall { radius } => {
                fill_sphere(rng, &mut out.y);
                let r_sharp = rng.random::<f64>().powf(1.0 / self.d as f64);
                for (z, u) in out.zb[0].iter_mut().zip(out.y.iter_mut()) {
                    *u *= radius;
                    *z = *u * r_sharp;
                }
                out.set_shared(true);
            }
            Kind::StudentGamma { k, scale } => {
                let rate = k / 2.0;
                let delta: f64 = Gamma::new(k / 2.0 - 1.0, 1.0 / rate).expect("valid gamma").sample(rng);
                let eps: f64 = Gamma::new(1.0, 1.0 / rate).expect("valid gamma").sample(rng);
                let a = scale / (delta + eps).sqrt();
                let b = scale / delta.sqrt();
                for (u, z) in out.y.iter_mut().zip(out.zb[0].iter_mut()) {
                    let n: f64 = rng.sample(StandardNormal);
                    *u = a * n;
                    *z = b * n;
                }
                out.set_shared(true);
            }
            Kind::Sum { parts, probs } => {
                let mut draws = Vec::with_capacity(parts.len());
                out.y.iter_mut().for_each(|v| *v = 0.0);
                for (c, part) in parts {
                    let mut jd = part.new_draw();
                    part.draw(rng, &mut jd)?;
                    out.y.iter_mut().zip(&jd.y).for_each(|(a, b)| *a += c * b);
                    draws.push(jd);
                }
                for (p, &(i, _)) in self.pairs.iter().enumerate() {
                    let s = pick(rng, &probs[p]);
                    let (c, part) = &parts[s];
                    let q = part.pair_index(i, i).expect("component supports the pair");
                    let jd = &draws[s];
                    for (k, z) in out.zb[p].iter_mut().enumerate() {
                        *z = out.y[k] + c * (jd.pair(q)[k] - jd.y[k]);
                    }
                }
                out.set_shared(false);
            }
            Kind::Mixture { parts, weights, nu, nu_is_mu } => {
                let s = pick(rng, weights);
                let mut jd = parts[s].new_draw();
                parts[s].draw(rng, &mut jd)?;
                out.y.copy_from_slice(&jd.y);
                if *nu_is_mu {
                    if jd.shared {
                        out.zb[0].copy_from_slice(&jd.zb[0]);
                        out.set_shared(true);
                        return Ok(());
                    }
                    for (p, &(i, _)) in self.pairs.iter().enumerate() {
                        let q = parts[s].pair_index(i, i).expect("component supports the pair");
                        out.zb[p].copy_from_slice(jd.pair(q));
                    }
                } else {
                    for (p, &(i, _)) in self.pairs.iter().enumerate() {
                        let t = pick(rng, &nu[p]);
                        let q = parts[t].pair_index(i, i).expect("component supports the pair");
                        if t == s {
                            out.zb[p].copy_from_slice(jd.pair(q));
                        } else {
                            let mut other = parts[t].new_draw();
                            parts[t].draw(rng, &mut other)?;
                            out.zb[p].copy_from_slice(other.pair(q));
                        }
                    }
                }
                out.set_shared(false);
            }
            Kind::LinearMap { a, base, mix } => {
                let mut jd = base.new_draw();
                base.draw(rng, &mut jd)?;
                a.mul_vec(&jd.y, &mut out.y);
                if jd.shared {
                    a.mul_vec(&jd.zb[0], &mut out.zb[0]);
                    out.set_shared(true);
                    return Ok(());
                }
                for (p, choices) in mix.iter().enumerate() {
                    let probs: Vec<f64> = choices.iter().map(|c| c.1).collect();
                    let q = choices[pick(rng, &probs)].0;
                    a.mul_vec(jd.pair(q), &mut out.zb[p]);
                }
                out.set_shared(false);
            }
        }
        Ok(())
    }

    /// `n` paired draws `(X, X^{ij})` with `X = θ + Y`.
    pub fn sample_pairs(&self, theta: &[f64], i: usize, j: usize, n: usize, seed: u64) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        let p = self
            .pair_index(i, j)
            .ok_or_else(|| Error::Parameter(format!("pair ({i}, {j}) has zero covariance weight")))?;
        mc::collect(n as u64, seed, |rng| {
            let mut jd = self.new_draw();
            self.draw(rng, &mut jd)?;
            let x = jd.y.iter().zip(theta).map(|(a, b)| a + b).collect();
            let z = jd.pair(p).iter().zip(theta).map(|(a, b)| a + b).collect();
            Ok((x, z))
        })
    }

    /// `Σ_ij σ_ij ∂_j f_i(θ + Y^{ij})` for one joint draw; `buf` is scratch.
    pub fn weighted_partials(&self, f: &dyn VectorField, theta: &[f64], jd: &JointDraw, buf: &mut [f64]) -> Result<f64> {
        if jd.shared {
            buf.iter_mut().zip(&jd.zb[0]).zip(theta).for_each(|((b, z), t)| *b = z + t);
            return f.jacobian_inner(&self.weights, buf);
        }
        let mut acc = 0.0;
        for (p, &(i, j)) in self.pairs.iter().enumerate() {
            buf.iter_mut().zip(&jd.zb[p]).zip(theta).for_each(|((b, z), t)| *b = z + t);
            acc += self.weights.get(i, j) * f.partial(i, j, buf)?;
        }
        Ok(acc)
    }
}

pub fn couple_gaussian(model: &NoiseModel) -> Result<ZeroBiasCoupling> {
    let d = model.d();
    let centered = model.clone().with_theta(vec![0.0; d])?;
    Ok(ZeroBiasCoupling::new(d, model.cov()?, Kind::Fixed { model: centered }))
}

/// Independent-replace coupling for product models and mixtures of them.
pub fn couple_independent(model: &NoiseModel) -> Result<ZeroBiasCoupling> {
    let d = model.d();
    let base = match model.family() {
        Family::ProductIid { law } => {
            ZeroBiasCoupling::new(d, Mat::scalar(d, law.variance()), Kind::IndependentReplace { law: *law })
        }
        Family::GaussianIso { sigma2 } => {
            let law = UnivariateLaw::Gaussian { var: *sigma2 };
            ZeroBiasCoupling::new(d, Mat::scalar(d, *sigma2), Kind::IndependentReplace { law })
        }
        Family::Mixture { components, weights, offsets } => {
            if offsets.iter().flatten().any(|v| *v != 0.0) {
                return param("mixture components must share their location");
            }
            let parts = components.iter().map(couple_independent).collect::<Result<Vec<_>>>()?;
            return zb_mixture(parts, weights.clone()).and_then(|c| rescale(c, model));
        }
        _ => return param(format!("independent-replace coupling needs independent coordinates, got {}", model.name())),
    };
    rescale(base, model)
}

fn rescale(c: ZeroBiasCoupling, model: &NoiseModel) -> Result<ZeroBiasCoupling> {
    match model.scaling() {
        Scaling::Standard => Ok(c),
        Scaling::Pinsker => zb_linear(Mat::scalar(model.d(), model.scale_factor()), c),
    }
}

/// `X = θ + σ√d·U`, `X^i = θ + σ√d·R♯·U` with `R♯` of density `d r^{d−1}`.
pub fn couple_sphere(d: usize, sigma: f64) -> Result<ZeroBiasCoupling> {
    if d < 2 || !(sigma > 0.0) {
        return param("sphere coupling needs d >= 2 and sigma > 0");
    }
    Ok(ZeroBiasCoupling::new(d, Mat::scalar(d, sigma * sigma), Kind::SphereBall { radius: sigma * (d as f64).sqrt() }))
}

/// `Y = s N/√(δ+ε)`, `Y^i = s N/√δ`, `δ ~ Γ(k/2−1, k/2)`, `ε ~ Γ(1, k/2)`.
pub fn couple_student(k: f64, d: usize, scale2: f64) -> Result<ZeroBiasCoupling> {
    if !(k >= 5.0) || d == 0 || !(scale2 > 0.0) {
        return param(format!("student coupling needs k >= 5, d >= 1 and positive dispersion (k = {k})"));
    }
    Ok(ZeroBiasCoupling::new(
        d,
        Mat::scalar(d, scale2 * k / (k - 2.0)),
        Kind::StudentGamma { k, scale: scale2.sqrt() },
    ))
}

/// Coupling for `Y = Σ_s c_s Y_s` with independent summands.
pub fn zb_sum(parts: Vec<(f64, ZeroBiasCoupling)>) -> Result<ZeroBiasCoupling> {
    if parts.is_empty() {
        return param("sum of zero summands");
    }
    let d = parts[0].1.d;
    if parts.iter().any(|(_, p)| p.d != d || !p.weights.is_diagonal()) {
        return param("summands must share the dimension and have diagonal covariance");
    }
    let mut weights = parts[0].1.weights.scale(parts[0].0 * parts[0].0);
    for (c, p) in parts.iter().skip(1) {
        weights = weights.add(&p.weights.scale(c * c));
    }
    let mut probs = Vec::new();
    for i in 0..d {
        let total = weights.get(i, i);
        if !(total > 0.0) {
            return param(format!("coordinate {i} has zero total variance"));
        }
        probs.push(parts.iter().map(|(c, p)| c * c * p.weights.get(i, i) / total).collect::<Vec<_>>());
    }
    Ok(ZeroBiasCoupling::new(d, weights, Kind::Sum { parts, probs }))
}

/// Coupling for a `μ`-mixture of centred components.
pub fn zb_mixture(parts: Vec<ZeroBiasCoupling>, weights: Vec<f64>) -> Result<ZeroBiasCoupling> {
    if parts.is_empty() || parts.len() != weights.len() {
        return param("mixture needs one weight per component");
    }
    if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return param("mixture weights must be nonnegative and sum to one");
    }
    let d = parts[0].d;
    if parts.iter().any(|p| p.d != d || !p.weights.is_diagonal()) {
        return param("mixture components must share the dimension and have diagonal covariance");
    }
    let mut total = parts[0].weights.scale(weights[0]);
    for (p, w) in parts.iter().zip(&weights).skip(1) {
        total = total.add(&p.weights.scale(*w));
    }
    let mut nu = Vec::new();
    let mut nu_is_mu = true;
    for i in 0..d {
        let s2 = total.get(i, i);
        if !(s2 > 0.0) {
            return param(format!("coordinate {i} has zero variance"));
        }
        let row: Vec<f64> = parts.iter().zip(&weights).map(|(p, w)| w * p.weights.get(i, i) / s2).collect();
        nu_is_mu &= row.iter().zip(&weights).all(|(a, b)| (a - b).abs() <= 1e-14);
        nu.push(row);
    }
    Ok(ZeroBiasCoupling::new(d, total, Kind::Mixture { parts, weights, nu, nu_is_mu }))
}

/// Coupling for `Y = A U` from a coupling of `U`.
pub fn zb_linear(a: Mat, base: ZeroBiasCoupling) -> Result<ZeroBiasCoupling> {
    if a.ncols() != base.d {
        return param("linear map columns must match the base dimension");
    }
    let d = a.nrows();
    let gamma = &base.weights;
    let sigma = simplify(a.congruence(gamma));
    let pairs = all_pairs(&sigma);
    let mut mix = Vec::with_capacity(pairs.len());
    for &(i, j) in &pairs {
        let sij = sigma.get(i, j);
        let mut row = Vec::new();
        for (q, &(k, l)) in base.pairs.iter().enumerate() {
            let w = a.get(i, k) * gamma.get(k, l) * a.get(j, l);
            if w < 0.0 {
                return param(format!(
                    "negative mixing weight a_ik γ_kl a_jl = {w:e} at (i, j, k, l) = ({i}, {j}, {k}, {l})"
                ));
            }
            if w > 0.0 {
                row.push((q, w / sij));
            }
        }
        mix.push(row);
    }
    let mut c = ZeroBiasCoupling::new(d, sigma, Kind::LinearMap { a, base: Box::new(base), mix });
    c.pairs = pairs;
    Ok(c)
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

/// Coupling realised by the square-bias construction, drawn independently of `Y`.
pub fn couple_square_bias(model: &NoiseModel) -> Result<ZeroBiasCoupling> {
    let cov = model.cov()?;
    if !cov.is_diagonal() {
        return param("square-bias construction needs a diagonal covariance");
    }
    let d = model.d();
    let centered = model.clone().with_theta(vec![0.0; d])?;
    let sampler = SquareBias::for_model(&centered)?;
    Ok(ZeroBiasCoupling::new(d, cov, Kind::SquareBiasScale { model: centered, sampler }))
}

/// The natural coupling of a model.
pub fn coupling_for(model: &NoiseModel) -> Result<ZeroBiasCoupling> {
    let d = model.d();
    let base = match model.family() {
        Family::GaussianIso { .. } => couple_gaussian(&model.clone().with_scaling(Scaling::Standard))?,
        Family::StudentT { k, scale2 } => couple_student(*k, d, *scale2)?,
        Family::SphereUniform { sigma } => couple_sphere(d, *sigma)?,
        Family::ProductIid { .. } => couple_independent(&model.clone().with_scaling(Scaling::Standard))?,
        Family::Mixture { components, weights, offsets } => {
            if offsets.iter().flatten().any(|v| *v != 0.0) {
                return param("mixture components must share their location");
            }
            let parts = components.iter().map(coupling_for).collect::<Result<Vec<_>>>()?;
            zb_mixture(parts, weights.clone())?
        }
        Family::CorruptedMixing { eps, sigma2, outlier } => {
            let g = couple_gaussian(&NoiseModel::gaussian(d, *sigma2)?)?;
            zb_mixture(vec![g, coupling_for(outlier)?], vec![1.0 - eps, *eps])?
        }
        Family::CorruptedAdditive { eps, sigma2, outlier } => {
            let g = couple_gaussian(&NoiseModel::gaussian(d, *sigma2)?)?;
            zb_sum(vec![((1.0 - eps).sqrt(), g), (eps.sqrt(), coupling_for(outlier)?)])?
        }
        Family::LinearTransform { a, base } => zb_linear(a.clone(), coupling_for(base)?)?,
        _ => couple_square_bias(&model.clone().with_scaling(Scaling::Standard))?,
    };
    rescale(base, model)
}

/// MC estimate of `E⟨X−θ, f(X)⟩ − Σ_ij σ_ij E[∂_j f_i(X^{ij})]`.
pub fn zb_identity_residual(
    model: &NoiseModel,
    coupling: &ZeroBiasCoupling,
    test_fn: &dyn VectorField,
    n: u64,
    seed: u64,
) -> Result<RiskReport> {
    let d = model.d();
    if coupling.d() != d || test_fn.dim() != d {
        return param("model, coupling and test function dimensions differ");
    }
    if test_fn.name() == "g0" {
        let report = model.validity_check(Need::ZeroBias);
        if !report.ok {
            return param(format!("invalid-by-validity-check: {}", report.reasons.join("; ")));
        }
    }
    let theta = model.theta();
    let out = mc::run::<1, _, _, _>(
        n,
        seed,
        || (coupling.new_draw(), vec![0.0; d], vec![0.0; d]),
        |(jd, x, fx), rng| {
            coupling.draw(rng, jd)?;
            x.iter_mut().zip(&jd.y).zip(theta).for_each(|((a, y), t)| *a = y + t);
            test_fn.eval(x, fx)?;
            let lhs: f64 = jd.y.iter().zip(fx.iter()).map(|(a, b)| a * b).sum();
            let rhs = coupling.weighted_partials(test_fn, theta, jd, x)?;
            Ok([lhs - rhs])
        },
    )?
    .guard(SINGULAR_FRACTION)?;
    Ok(out.report(0, seed, format!("zb-residual {} {} {}", model.name(), coupling.construction(), test_fn.name())))
}
