//! Monte Carlo risk engine and analytic risk-bound calculators.

use crate::error::{param, Result};
use crate::estimation::{sure, EstimatorKind, EstimatorSpec, GridSpec, SoftThresholdPath};
use crate::fields::{guard_norm2, VectorField};
use crate::mat::Mat;
use crate::mc::{self, RiskReport, Welford};
use crate::noise_models::NoiseModel;
use crate::stein_kernels::{DiscrepancyStats, SINGULAR_FRACTION};
use crate::zero_bias::ZeroBiasCoupling;

fn check_dims(model: &NoiseModel, est: &EstimatorSpec) -> Result<()> {
    if model.d() != est.d {
        return param(format!("model has d = {} but estimator has d = {}", model.d(), est.d));
    }
    Ok(())
}

/// MC mean of `‖S(X) − θ‖²`.
pub fn mc_risk(model: &NoiseModel, est: &EstimatorSpec, n: u64, seed: u64) -> Result<RiskReport> {
    check_dims(model, est)?;
    let d = model.d();
    let theta = model.theta();
    let out = mc::run::<1, _, _, _>(
        n,
        seed,
        || (vec![0.0; d], vec![0.0; d]),
        |(x, buf), rng| {
            model.sample_into(rng, x);
            Ok([est.loss(x, theta, buf)?])
        },
    )?
    .guard(SINGULAR_FRACTION)?;
    Ok(out.report(0, seed, format!("risk {} {}", model.name(), est.name())))
}

/// Paired MC of `‖S_λ(X) − θ‖² − ‖X − θ‖²` for the shrinkage estimator.
pub fn mc_excess_risk(model: &NoiseModel, lambda: f64, n: u64, seed: u64) -> Result<RiskReport> {
    let est = EstimatorSpec::james_stein(model.d(), lambda)?;
    paired_excess(model, &est, n, seed)
}

/// Paired MC of the loss of `est` minus the loss of the identity.
pub fn paired_excess(model: &NoiseModel, est: &EstimatorSpec, n: u64, seed: u64) -> Result<RiskReport> {
    check_dims(model, est)?;
    let d = model.d();
    let theta = model.theta();
    let out = mc::run::<1, _, _, _>(
        n,
        seed,
        || (vec![0.0; d], vec![0.0; d]),
        |(x, buf), rng| {
            model.sample_into(rng, x);
            let base: f64 = x.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok([est.loss(x, theta, buf)? - base])
        },
    )?
    .guard(SINGULAR_FRACTION)?;
    Ok(out.report(0, seed, format!("excess {} {}", model.name(), est.name())))
}

/// Paired MC of `SURE(X) − ‖S(X) − θ‖²` with the Gaussian formula and the model covariance.
pub fn sure_bias(model: &NoiseModel, est: &EstimatorSpec, n: u64, seed: u64) -> Result<RiskReport> {
    Ok(sure_bias_full(model, est, n, seed)?.2)
}

/// `(SURE mean, risk mean, bias)` from one set of draws.
pub fn sure_bias_full(model: &NoiseModel, est: &EstimatorSpec, n: u64, seed: u64) -> Result<(RiskReport, RiskReport, RiskReport)> {
    check_dims(model, est)?;
    let d = model.d();
    let theta = model.theta();
    let sigma = model.cov()?;
    let out = mc::run::<3, _, _, _>(
        n,
        seed,
        || (vec![0.0; d], vec![0.0; d]),
        |(x, buf), rng| {
            model.sample_into(rng, x);
            let s = sure(x, est, &sigma)?;
            let l = est.loss(x, theta, buf)?;
            Ok([s, l, s - l])
        },
    )?
    .guard(SINGULAR_FRACTION)?;
    let tag = format!("{} {}", model.name(), est.name());
    Ok((
        out.report(0, seed, format!("sure {tag}")),
        out.report(1, seed, format!("risk {tag}")),
        out.report(2, seed, format!("sure-bias {tag}")),
    ))
}

/// MC estimate of `E‖X‖^{-2p} · d^p`.
pub fn e_inv_moment(model: &NoiseModel, p: u32, n: u64, seed: u64) -> Result<RiskReport> {
    let d = model.d();
    let out = mc::run::<1, _, _, _>(
        n,
        seed,
        || vec![0.0; d],
        |x, rng| {
            model.sample_into(rng, x);
            Ok([(d as f64 / guard_norm2(x)?).powi(p as i32)])
        },
    )?
    .guard(SINGULAR_FRACTION)?;
    Ok(out.report(0, seed, format!("E[(d/|X|^2)^{p}] {}", model.name())))
}

/// MC estimate of `E[1/‖X‖²]`.
pub fn e_inv2(model: &NoiseModel, n: u64, seed: u64) -> Result<RiskReport> {
    let mut r = e_inv_moment(model, 1, n, seed)?;
    let d = model.d() as f64;
    r.mean /= d;
    r.stderr /= d;
    r.label = format!("E[1/|X|^2] {}", model.name());
    Ok(r)
}

/// Risk of the SURE-selected soft threshold next to every fixed grid threshold.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub grid: Vec<f64>,
    /// Risk of `S_λ̂` with `λ̂` reselected on every replicate.
    pub selected: RiskReport,
    /// Risk estimate at `λ̂`, averaged over replicates.
    pub selected_sure: RiskReport,
    pub mean_lambda_hat: f64,
    pub grid_risk: Vec<RiskReport>,
    /// Index of the smallest grid risk.
    pub best: usize,
}

pub fn soft_threshold_calibration(model: &NoiseModel, grid: &GridSpec, n: u64, seed: u64) -> Result<Calibration> {
    let d = model.d();
    let sigma2 = model
        .sigma2()
        .ok_or_else(|| crate::Error::Parameter(format!("{} has no isotropic variance", model.name())))?;
    let points = grid.points(d);
    let theta = model.theta();
    let rows = mc::collect(n, seed, |rng| {
        let mut x = vec![0.0; d];
        model.sample_into(rng, &mut x);
        let path = SoftThresholdPath::new(&x, Some(theta));
        let sure = path.sure_curve(sigma2, &points);
        let mut best = 0;
        for (g, v) in sure.iter().enumerate() {
            if *v < sure[best] {
                best = g;
            }
        }
        let losses: Vec<f64> = points.iter().map(|l| path.loss(*l)).collect();
        Ok((losses[best], points[best], sure[best], losses))
    })?;
    let mut selected = Welford::default();
    let mut selected_sure = Welford::default();
    let mut lam = Welford::default();
    let mut per_grid = vec![Welford::default(); points.len()];
    for (l, lh, s, losses) in &rows {
        selected.push(*l);
        selected_sure.push(*s);
        lam.push(*lh);
        for (w, v) in per_grid.iter_mut().zip(losses) {
            w.push(*v);
        }
    }
    let grid_risk: Vec<RiskReport> = per_grid
        .iter()
        .zip(&points)
        .map(|(w, l)| RiskReport::from_welford(w, seed, format!("soft-threshold risk lambda={l}")))
        .collect();
    let best = grid_risk
        .iter()
        .enumerate()
        .fold(0, |b, (g, r)| if r.mean < grid_risk[b].mean { g } else { b });
    Ok(Calibration {
        selected: RiskReport::from_welford(&selected, seed, format!("soft-threshold risk at sure-selected lambda {}", model.name())),
        selected_sure: RiskReport::from_welford(&selected_sure, seed, format!("sure at selected lambda {}", model.name())),
        mean_lambda_hat: lam.mean(),
        grid: points,
        grid_risk,
        best,
    })
}

/// Whether a bound input is an estimate or itself a bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Estimate,
    BoundInput,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tagged {
    pub value: f64,
    pub kind: InputKind,
}

impl Tagged {
    pub fn estimate(value: f64) -> Self {
        Tagged { value, kind: InputKind::Estimate }
    }

    pub fn bound(value: f64) -> Self {
        Tagged { value, kind: InputKind::BoundInput }
    }
}

/// Inputs to the analytic risk bounds; unset entries are `None`.
#[derive(Debug, Clone, Default)]
pub struct BoundInputs {
    pub lambda: f64,
    pub d: usize,
    pub trace_sigma: f64,
    pub kappa: f64,
    pub alpha_minus: Option<f64>,
    pub alpha_plus: Option<f64>,
    pub e_inv2: Option<Tagged>,
    pub e_d2_inv4: Option<Tagged>,
    pub discrepancy: Option<DiscrepancyStats>,
    pub c4: Option<f64>,
    pub c8: Option<f64>,
    pub c_minus2: Option<f64>,
    pub c_minus4: Option<f64>,
    pub cp: Option<f64>,
}

impl BoundInputs {
    /// Basic inputs from a model's covariance.
    pub fn from_model(model: &NoiseModel, lambda: f64) -> Result<Self> {
        let cov = model.cov()?;
        Ok(BoundInputs {
            lambda,
            d: model.d(),
            trace_sigma: cov.trace(),
            kappa: cov.max_eigenvalue(),
            ..Default::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha_minus", self.alpha_minus),
            ("alpha_plus", self.alpha_plus),
            ("c4", self.c4),
            ("c8", self.c8),
            ("c_minus2", self.c_minus2),
            ("c_minus4", self.c_minus4),
            ("cp", self.cp),
        ] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return param(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if let (Some(a), Some(b)) = (self.alpha_minus, self.alpha_plus) {
            if a > b {
                return param("alpha_minus must not exceed alpha_plus");
            }
        }
        if !(self.lambda >= 0.0) {
            return param("lambda must be nonnegative");
        }
        Ok(())
    }

    /// Tags the result when any expectation input is itself a bound.
    pub fn uses_bound_input(&self) -> bool {
        [self.e_inv2, self.e_d2_inv4].iter().flatten().any(|t| t.kind == InputKind::BoundInput)
    }

    fn need(&self, v: Option<Tagged>, name: &str) -> Result<f64> {
        v.map(|t| t.value).ok_or_else(|| crate::Error::Parameter(format!("bound input {name} is not set")))
    }
}

/// `Tr Σ − λ E[1/‖X‖²] (2dα₋ − 4α₊ − λ)`.
pub fn bound_thm31(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let (am, ap) = match (inputs.alpha_minus, inputs.alpha_plus) {
        (Some(a), Some(b)) => (a, b),
        _ => return param("alpha bounds are not set"),
    };
    let e = inputs.need(inputs.e_inv2, "e_inv2")?;
    let l = inputs.lambda;
    Ok(inputs.trace_sigma - l * e * (2.0 * inputs.d as f64 * am - 4.0 * ap - l))
}

/// Smallest dimension with a nonempty improvement window.
pub fn thm31_critical_dimension(alpha_minus: f64, alpha_plus: f64) -> usize {
    1 + (2.0 * alpha_plus / alpha_minus).floor() as usize
}

/// `(λ/d) √E[d²‖X‖⁻⁴] (√Var Tr T + 2√E‖T − Σ‖²)`.
pub fn b_lambda(inputs: &BoundInputs) -> Result<f64> {
    let e4 = inputs.need(inputs.e_d2_inv4, "e_d2_inv4")?;
    let disc = inputs.discrepancy.as_ref().ok_or_else(|| crate::Error::Parameter("discrepancy is not set".into()))?;
    Ok(inputs.lambda / inputs.d as f64
        * e4.sqrt()
        * (disc.var_trace_t.max(0.0).sqrt() + 2.0 * disc.e_frob_t_minus_sigma_sq.max(0.0).sqrt()))
}

fn gain_term(inputs: &BoundInputs) -> Result<f64> {
    let e = inputs.need(inputs.e_inv2, "e_inv2")?;
    let l = inputs.lambda;
    Ok(l * e * (l - 2.0 * (inputs.trace_sigma - 2.0 * inputs.kappa)))
}

/// `Tr Σ + λ E[1/‖X‖²](λ − 2(Tr Σ − 2κ)) + 2B_λ`.
pub fn bound_thm33(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    Ok(inputs.trace_sigma + gain_term(inputs)? + 2.0 * b_lambda(inputs)?)
}

/// As [`bound_thm33`] with a zero-bias remainder `2B*_λ`.
pub fn bound_zero_bias(inputs: &BoundInputs, b_star: f64) -> Result<f64> {
    inputs.validate()?;
    Ok(inputs.trace_sigma + gain_term(inputs)? + 2.0 * b_star)
}

/// MC of `|Σ_ij σ_ij E[∂_j f_i(X^{ij}) − ∂_j f_i(X)]|` for the shrinkage field.
pub fn bound_b_star(
    model: &NoiseModel,
    coupling: &ZeroBiasCoupling,
    lambda: f64,
    n: u64,
    seed: u64,
) -> Result<RiskReport> {
    let d = model.d();
    if coupling.d() != d {
        return param("coupling and model dimensions differ");
    }
    let est = EstimatorSpec::james_stein(d, lambda)?;
    let theta = model.theta();
    let weights = coupling.weights().clone();
    let out = mc::run::<1, _, _, _>(
        n,
        seed,
        || (coupling.new_draw(), vec![0.0; d]),
        |(jd, x), rng| {
            coupling.draw(rng, jd)?;
            let zb = coupling.weighted_partials(&est, theta, jd, x)?;
            x.iter_mut().zip(&jd.y).zip(theta).for_each(|((a, b), c)| *a = b + c);
            let base = est.jacobian_inner(&weights, x)?;
            Ok([zb - base])
        },
    )?
    .guard(SINGULAR_FRACTION)?;
    let mut r = out.report(0, seed, format!("b-star {} {} lambda={lambda}", model.name(), coupling.construction()));
    r.mean = r.mean.abs();
    Ok(r)
}

/// Closed-form `B*_λ` bound for weakly dependent coordinates.
///
/// `cov_sum` is `Σ_i |Cov((X_i−θ_i)², ‖X^{¬i}‖⁻²)|`, zero for product laws.
pub fn bound_b_star_closed(inputs: &BoundInputs, sigma2: f64, theta_norm2: f64, cov_sum: f64) -> Result<f64> {
    inputs.validate()?;
    if inputs.d < 3 {
        return param("closed-form remainder needs d >= 3");
    }
    let (c4, c8, cm4) = match (inputs.c4, inputs.c8, inputs.c_minus4) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return param("c4, c8 and c_minus4 must be set"),
    };
    let d = inputs.d as f64;
    let l = inputs.lambda;
    Ok(l * cov_sum
        + 6.0 * l * cm4.sqrt() / (d * d) * (d * (sigma2 * c4.sqrt() + c8.sqrt() / 3.0) + theta_norm2 * (sigma2 + c4)))
}

/// Refined remainder bound for mixtures of product laws.
pub fn bound_b_star_refined(inputs: &BoundInputs, sigma2: f64, theta: &[f64]) -> Result<f64> {
    inputs.validate()?;
    let (c4, cm2) = match (inputs.c4, inputs.c_minus2) {
        (Some(a), Some(b)) => (a, b),
        _ => return param("c4 and c_minus2 must be set"),
    };
    let d = inputs.d as f64;
    let l1: f64 = theta.iter().map(|t| t.abs()).sum();
    let l2: f64 = theta.iter().map(|t| t * t).sum();
    Ok(25.0 * cm2 * inputs.lambda / (8.0 * d * d)
        * (d * c4 / 3.0 + c4.powf(0.75) * l1 + 2.0 * sigma2 * l2 + d * sigma2 * sigma2))
}

/// Covariance-sum bound for coordinates with dependency neighbourhoods of size `eta`.
pub fn local_dependence_cov_bound(eta: usize, c8: f64, sigma2: f64, theta_inf: f64, d: usize) -> Result<f64> {
    if eta >= d {
        return param("neighbourhood size must be below d");
    }
    let gap = (d - eta) as f64;
    Ok(8.0 * eta as f64 * ((c8 + sigma2.powi(4)) * (c8 + theta_inf.powi(8))).powf(0.25) / (gap * gap))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseMomentBound {
    pub bound: f64,
    pub valid: bool,
}

/// `C(2/μ)^m`, valid when `d ≥ 2m/q`.
pub fn inverse_moment_bound(c: f64, mu: f64, q: f64, m: u32, d: usize) -> Result<InverseMomentBound> {
    if !(c > 0.0 && mu > 0.0 && q > 0.0) || m == 0 {
        return param("inverse moment bound needs C, mu, q, m > 0");
    }
    Ok(InverseMomentBound { bound: c * (2.0 / mu).powi(m as i32), valid: d as f64 >= 2.0 * m as f64 / q })
}

/// `1/(‖θ‖² + Tr Σ)`, a lower bound on `E[1/‖X‖²]`.
pub fn jensen_lower(theta: &[f64], trace_sigma: f64) -> Result<f64> {
    if !(trace_sigma > 0.0) {
        return param("trace of the covariance must be positive");
    }
    Ok(1.0 / (theta.iter().map(|t| t * t).sum::<f64>() + trace_sigma))
}

/// Student-t quantities at unit shape, covariance `k/(k−2)·Id`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudentConstants {
    pub sigma2: f64,
    /// Upper bound on `E[d²‖X‖⁻⁴]`.
    pub e_d2_inv4_bound: f64,
    pub var_trace_t: f64,
    pub e_frob_t_minus_sigma_sq: f64,
    pub kernel_excess_bound: f64,
    pub zero_bias_excess_bound: f64,
}

pub fn student_constants(d: usize, k: f64, lambda: f64) -> Result<StudentConstants> {
    if d < 6 || d % 2 != 0 {
        return param(format!("student constants need even d >= 6, got {d}"));
    }
    if !(k >= 5.0) {
        return param(format!("student constants need k >= 5, got {k}"));
    }
    let df = d as f64;
    let common = (df + k - 2.0) * (k - 2.0).powi(4) * (k - 4.0);
    Ok(StudentConstants {
        sigma2: k / (k - 2.0),
        e_d2_inv4_bound: df * df * (k - 2.0).powi(2) * (k + 2.0) / ((df - 2.0) * (df - 4.0) * k.powi(3)),
        var_trace_t: 2.0 * df.powi(3) * k.powi(4) / common,
        e_frob_t_minus_sigma_sq: 2.0 * df * df * k.powi(4) / common,
        kernel_excess_bound: 24.0
            * lambda
            * (2.0 * df * df * (k + 2.0) / ((df - 2.0) * (df - 4.0) * (df + k - 2.0) * k * (k - 4.0))).sqrt(),
        zero_bias_excess_bound: 16.0 * lambda * (df + k - 2.0) / ((df - 2.0) * k),
    })
}

/// `B*_λ` bounds for the Student coupling: `2λ/k` at `θ = 0`, otherwise `8λ(d+k−2)/((d−2)k)`.
pub fn student_b_star_bound(d: usize, k: f64, lambda: f64, theta_is_zero: bool) -> f64 {
    if theta_is_zero {
        2.0 * lambda / k
    } else {
        8.0 * lambda * (d as f64 + k - 2.0) / ((d as f64 - 2.0) * k)
    }
}

/// `σ²c²/(σ² + c²)`.
pub fn pinsker_limit(sigma2: f64, c2: f64) -> Result<f64> {
    if !(sigma2 >= 0.0 && c2 >= 0.0) {
        return param("pinsker limit needs nonnegative arguments");
    }
    if sigma2 == 0.0 && c2 == 0.0 {
        return Ok(0.0);
    }
    if c2.is_infinite() {
        return Ok(sigma2);
    }
    Ok(sigma2 * c2 / (sigma2 + c2))
}

/// Kernel-based adaptivity bound with `σ_d² = σ²/d` and `λ = (d−2)σ_d²`.
pub fn adaptivity_bound_kernel(theta_norm2: f64, sigma2: f64, d: usize, b_lambda: f64) -> f64 {
    let df = d as f64;
    let s2d = sigma2 / df;
    df * s2d - (df - 2.0).powi(2) * s2d * s2d / (theta_norm2 + df * s2d) + 2.0 * b_lambda
}

/// Zero-bias adaptivity bound with constant `L`.
pub fn adaptivity_bound_zero_bias(theta: &[f64], sigma2: f64, l_const: f64) -> Result<f64> {
    let d = theta.len() as f64;
    let l2: f64 = theta.iter().map(|t| t * t).sum();
    if !(l2 > 0.0) {
        return param("zero-bias adaptivity bound needs θ ≠ 0");
    }
    let l1: f64 = theta.iter().map(|t| t.abs()).sum();
    let lambda = (d - 2.0) * sigma2 / d;
    Ok(sigma2 * l2 / (sigma2 + l2) * (1.0 + 4.0 * sigma2 / (d * l2)) + l_const * lambda * (1.0 / d + l1 / (d * d) + l2 / d.powi(3)))
}

/// Lower bound on the risk reduction of the sphere example, `σ²(d−2)²/((√C+1)² d)`.
pub fn sphere_gain(d: usize, sigma2: f64, big_c: f64) -> f64 {
    let df = d as f64;
    sigma2 * (df - 2.0).powi(2) / ((big_c.sqrt() + 1.0).powi(2) * df)
}

/// `2B*_λ ≤ 4σ²(d−2)²/((√c−1)³ d²)` for the sphere example at `λ = σ²(d−2)`.
pub fn sphere_two_b_star(d: usize, sigma2: f64, c: f64) -> Result<f64> {
    if !(c > 1.0) {
        return param("sphere remainder bound needs c > 1");
    }
    let df = d as f64;
    Ok(4.0 * sigma2 * (df - 2.0).powi(2) / ((c.sqrt() - 1.0).powi(3) * df * df))
}

/// `4(√C+1)²/(√c−1)³`; improvement is certified for `d` above it.
pub fn sphere_crossing(c: f64, big_c: f64) -> Result<f64> {
    if !(c > 1.0) || big_c < c {
        return param("sphere crossing needs 1 < c <= C");
    }
    Ok(4.0 * (big_c.sqrt() + 1.0).powi(2) / (c.sqrt() - 1.0).powi(3))
}

/// Bound inputs for a Gaussian model, whose discrepancy is zero.
pub fn gaussian_inputs(model: &NoiseModel, lambda: f64, e_inv2: f64) -> Result<BoundInputs> {
    let sigma2 = model
        .sigma2()
        .ok_or_else(|| crate::Error::Parameter(format!("{} has no isotropic variance", model.name())))?;
    let mut b = BoundInputs::from_model(model, lambda)?;
    b.alpha_minus = Some(sigma2);
    b.alpha_plus = Some(sigma2);
    b.e_inv2 = Some(Tagged::estimate(e_inv2));
    b.e_d2_inv4 = Some(Tagged::estimate(0.0));
    b.discrepancy = Some(DiscrepancyStats::zero(model.cov()?.trace()));
    Ok(b)
}

/// Exact Gaussian risk `Tr Σ + λ(λ − 2σ²(d−2)) E[1/‖X‖²]` for `Σ = σ²Id`.
pub fn gaussian_js_risk(d: usize, sigma2: f64, lambda: f64, e_inv2: f64) -> f64 {
    d as f64 * sigma2 + lambda * (lambda - 2.0 * sigma2 * (d as f64 - 2.0)) * e_inv2
}

/// Estimator for the kind at the given λ.
pub fn estimator(kind: EstimatorKind, d: usize, lambda: f64) -> Result<EstimatorSpec> {
    match kind {
        EstimatorKind::Identity => Ok(EstimatorSpec::identity(d)),
        k => EstimatorSpec::new(k, d, lambda),
    }
}

/// `Σ` scaled by a scalar, used when only `Σ = σ²Id` is known.
pub fn iso(d: usize, sigma2: f64) -> Mat {
    Mat::scalar(d, sigma2)
}
