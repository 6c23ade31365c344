//! Shrinkage and soft-threshold estimators and their risk estimates.

use crate::error::{param, Error, Result};
use crate::fields::{guard_norm2, norm2, VectorField, SINGULAR_NORM2};
use crate::mat::Mat;
use crate::mc::{self, RiskReport};
use crate::noise_models::{Need, NoiseModel};
use crate::stein_kernels::{SteinKernel, SINGULAR_FRACTION};
use crate::zero_bias::ZeroBiasCoupling;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Identity,
    JamesStein,
    SoftThreshold,
}

impl EstimatorKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(EstimatorKind::Identity),
            "james-stein" | "shrinkage" | "js" => Ok(EstimatorKind::JamesStein),
            "soft-threshold" | "soft" => Ok(EstimatorKind::SoftThreshold),
            _ => param(format!("unknown estimator {s:?}")),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Identity => "identity",
            EstimatorKind::JamesStein => "james-stein",
            EstimatorKind::SoftThreshold => "soft-threshold",
        }
    }
}

/// An estimator `S(x) = x + f(x)`, exposed as the field `f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub lambda: f64,
    pub d: usize,
    /// Maps `S_λ(0)` to `0` instead of failing.
    pub define_zero: bool,
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind, d: usize, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return param(format!("lambda must be finite and nonnegative, got {lambda}"));
        }
        if d == 0 {
            return param("dimension must be positive");
        }
        Ok(EstimatorSpec { kind, lambda, d, define_zero: false })
    }

    pub fn identity(d: usize) -> Self {
        EstimatorSpec { kind: EstimatorKind::Identity, lambda: 0.0, d, define_zero: false }
    }

    pub fn james_stein(d: usize, lambda: f64) -> Result<Self> {
        Self::new(EstimatorKind::JamesStein, d, lambda)
    }

    pub fn soft_threshold(d: usize, lambda: f64) -> Result<Self> {
        Self::new(EstimatorKind::SoftThreshold, d, lambda)
    }

    pub fn with_define_zero(mut self, on: bool) -> Self {
        self.define_zero = on;
        self
    }

    fn js_norm2(&self, x: &[f64]) -> Result<Option<f64>> {
        if self.lambda == 0.0 {
            return Ok(None);
        }
        let n2 = norm2(x);
        if n2 <= SINGULAR_NORM2 {
            if self.define_zero {
                return Ok(Some(0.0));
            }
            guard_norm2(x)?;
        }
        Ok(Some(n2))
    }

    /// Writes `S(x)` into `out`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.eval(x, out)?;
        out.iter_mut().zip(x).for_each(|(o, v)| *o += v);
        Ok(())
    }

    /// `‖S(x) − θ‖²`.
    pub fn loss(&self, x: &[f64], theta: &[f64], buf: &mut [f64]) -> Result<f64> {
        self.apply(x, buf)?;
        Ok(buf.iter().zip(theta).map(|(s, t)| (s - t) * (s - t)).sum())
    }

    /// True when the field has a singularity at the origin.
    pub fn singular_at_origin(&self) -> bool {
        self.kind == EstimatorKind::JamesStein && self.lambda > 0.0 && !self.define_zero
    }
}

impl VectorField for EstimatorSpec {
    fn dim(&self) -> usize {
        self.d
    }

    fn name(&self) -> String {
        format!("{}[{}]", self.kind.name(), self.lambda)
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match self.kind {
            EstimatorKind::Identity => out.iter_mut().for_each(|o| *o = 0.0),
            EstimatorKind::JamesStein => match self.js_norm2(x)? {
                None => out.iter_mut().for_each(|o| *o = 0.0),
                Some(n2) if n2 <= SINGULAR_NORM2 => out.iter_mut().zip(x).for_each(|(o, v)| *o = -v),
                Some(n2) => {
                    let c = -self.lambda / n2;
                    out.iter_mut().zip(x).for_each(|(o, v)| *o = c * v);
                }
            },
            EstimatorKind::SoftThreshold => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = soft1(*v, self.lambda) - v;
                }
            }
        }
        Ok(())
    }

    fn partial(&self, i: usize, j: usize, x: &[f64]) -> Result<f64> {
        match self.kind {
            EstimatorKind::Identity => Ok(0.0),
            EstimatorKind::JamesStein => match self.js_norm2(x)? {
                None => Ok(0.0),
                Some(n2) if n2 <= SINGULAR_NORM2 => Ok(if i == j { -1.0 } else { 0.0 }),
                Some(n2) => {
                    let delta = if i == j { 1.0 / n2 } else { 0.0 };
                    Ok(-self.lambda * (delta - 2.0 * x[i] * x[j] / (n2 * n2)))
                }
            },
            EstimatorKind::SoftThreshold => Ok(if i == j && x[i].abs() < self.lambda { -1.0 } else { 0.0 }),
        }
    }

    fn divergence(&self, x: &[f64]) -> Result<f64> {
        match self.kind {
            EstimatorKind::Identity => Ok(0.0),
            EstimatorKind::JamesStein => match self.js_norm2(x)? {
                None => Ok(0.0),
                Some(n2) if n2 <= SINGULAR_NORM2 => Ok(-(self.d as f64)),
                Some(n2) => Ok(-self.lambda * (self.d as f64 - 2.0) / n2),
            },
            EstimatorKind::SoftThreshold => Ok(-(x.iter().filter(|v| v.abs() < self.lambda).count() as f64)),
        }
    }

    fn jacobian_inner(&self, m: &Mat, x: &[f64]) -> Result<f64> {
        match self.kind {
            EstimatorKind::JamesStein => match self.js_norm2(x)? {
                None => Ok(0.0),
                Some(n2) if n2 <= SINGULAR_NORM2 => Ok(-m.trace()),
                Some(n2) => Ok(-self.lambda * (m.trace() / n2 - 2.0 * m.quad_form(x) / (n2 * n2))),
            },
            EstimatorKind::SoftThreshold => {
                let mut acc = 0.0;
                for (i, v) in x.iter().enumerate() {
                    if v.abs() < self.lambda {
                        acc -= m.diag_entry(i);
                    }
                }
                Ok(acc)
            }
            EstimatorKind::Identity => Ok(0.0),
        }
    }
}

fn soft1(v: f64, lambda: f64) -> f64 {
    let m = v.abs() - lambda;
    if m > 0.0 {
        m.copysign(v)
    } else {
        0.0
    }
}

/// `x (1 − λ/‖x‖²)`.
pub fn james_stein(x: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x.len()];
    EstimatorSpec::james_stein(x.len(), lambda)?.apply(x, &mut out)?;
    Ok(out)
}

/// Coordinatewise `sgn(x_i)(|x_i| − λ)₊`.
pub fn soft_threshold(x: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return param(format!("lambda must be nonnegative, got {lambda}"));
    }
    Ok(x.iter().map(|v| soft1(*v, lambda)).collect())
}

/// `Tr Σ + ‖f(x)‖² + 2⟨Σ, ∇f(x)⟩`.
pub fn sure(x: &[f64], est: &EstimatorSpec, sigma: &Mat) -> Result<f64> {
    let mut f = vec![0.0; x.len()];
    sure_with(x, est, sigma, sigma.trace(), &mut f)
}

fn sure_with(x: &[f64], est: &EstimatorSpec, weight: &Mat, trace_sigma: f64, f: &mut [f64]) -> Result<f64> {
    if x.len() != est.d || weight.nrows() != est.d {
        return param("dimension mismatch in risk estimate");
    }
    est.eval(x, f)?;
    Ok(trace_sigma + norm2(f) + 2.0 * est.jacobian_inner(weight, x)?)
}

/// `Tr Σ + ‖f(x)‖² + 2⟨T(x − θ), ∇f(x)⟩` for a pointwise kernel.
pub fn sure_kernel(x: &[f64], theta: &[f64], est: &EstimatorSpec, kernel: &SteinKernel) -> Result<f64> {
    let y: Vec<f64> = x.iter().zip(theta).map(|(a, b)| a - b).collect();
    let t = kernel.evaluate(&y)?;
    let mut f = vec![0.0; x.len()];
    sure_with(x, est, &t, kernel.mean()?.trace(), &mut f)
}

/// Paired Monte Carlo comparison of a risk estimate with the realised loss.
#[derive(Debug, Clone, PartialEq)]
pub struct SureCheck {
    pub sure: RiskReport,
    pub risk: RiskReport,
    /// `SURE − loss`, replicate by replicate.
    pub gap: RiskReport,
}

fn check_singular_validity(model: &NoiseModel, est: &EstimatorSpec, need: Need) -> Result<()> {
    if est.singular_at_origin() {
        let report = model.validity_check(need);
        if !report.ok {
            return param(format!("invalid-by-validity-check: {}", report.reasons.join("; ")));
        }
    }
    Ok(())
}

/// MC mean of the kernel risk estimate next to the MC risk.
pub fn sure_kernel_check(
    model: &NoiseModel,
    est: &EstimatorSpec,
    kernel: &SteinKernel,
    n: u64,
    seed: u64,
) -> Result<SureCheck> {
    let d = model.d();
    if kernel.dim() != d || est.d != d {
        return param("model, kernel and estimator dimensions differ");
    }
    check_singular_validity(model, est, Need::Kernel)?;
    let theta = model.theta();
    let trace = model.cov()?.trace();
    let out = mc::run::<3, _, _, _>(
        n,
        seed,
        || (vec![0.0; d], vec![0.0; d], vec![0.0; d]),
        |(y, x, buf), rng| {
            let t = kernel.draw(Some(model), rng, y)?;
            x.iter_mut().zip(y.iter()).zip(theta).for_each(|((a, b), c)| *a = b + c);
            let s = sure_with(x, est, &t, trace, buf)?;
            let l = est.loss(x, theta, buf)?;
            Ok([s, l, s - l])
        },
    )?
    .guard(SINGULAR_FRACTION)?;
    let tag = format!("{} {} {}", model.name(), kernel.construction(), est.name());
    Ok(SureCheck {
        sure: out.report(0, seed, format!("sure-kernel {tag}")),
        risk: out.report(1, seed, format!("risk {tag}")),
        gap: out.report(2, seed, format!("sure-kernel-gap {tag}")),
    })
}

/// MC estimate of `Tr Σ + E‖f(X)‖² + 2 Σ_ij σ_ij E ∂_j f_i(X^{ij})`.
pub fn sure_zero_bias_mean(
    model: &NoiseModel,
    est: &EstimatorSpec,
    coupling: &ZeroBiasCoupling,
    n: u64,
    seed: u64,
) -> Result<RiskReport> {
    Ok(sure_zero_bias_check(model, est, coupling, n, seed)?.sure)
}

/// As [`sure_zero_bias_mean`], paired with the loss on the same draws.
pub fn sure_zero_bias_check(
    model: &NoiseModel,
    est: &EstimatorSpec,
    coupling: &ZeroBiasCoupling,
    n: u64,
    seed: u64,
) -> Result<SureCheck> {
    let d = model.d();
    if coupling.d() != d || est.d != d {
        return param("model, coupling and estimator dimensions differ");
    }
    let cov = model.cov()?;
    if cov.frobenius_dist2(coupling.weights()) > 1e-18 * (1.0 + cov.frobenius_inner(&cov)) {
        return param("coupling weights do not match the model covariance");
    }
    check_singular_validity(model, est, Need::ZeroBias)?;
    let theta = model.theta();
    let trace = cov.trace();
    let out = mc::run::<3, _, _, _>(
        n,
        seed,
        || (coupling.new_draw(), vec![0.0; d], vec![0.0; d]),
        |(jd, x, buf), rng| {
            coupling.draw(rng, jd)?;
            x.iter_mut().zip(&jd.y).zip(theta).for_each(|((a, b), c)| *a = b + c);
            est.eval(x, buf)?;
            let f2 = norm2(buf);
            let l = est.loss(x, theta, buf)?;
            let s = trace + f2 + 2.0 * coupling.weighted_partials(est, theta, jd, buf)?;
            Ok([s, l, s - l])
        },
    )?
    .guard(SINGULAR_FRACTION)?;
    let tag = format!("{} {} {}", model.name(), coupling.construction(), est.name());
    Ok(SureCheck {
        sure: out.report(0, seed, format!("sure-zero-bias {tag}")),
        risk: out.report(1, seed, format!("risk {tag}")),
        gap: out.report(2, seed, format!("sure-zero-bias-gap {tag}")),
    })
}

/// Uniform grid on `[0, √(C log d)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub c: f64,
    pub size: usize,
}

pub const DEFAULT_GRID_SIZE: usize = 512;

impl GridSpec {
    pub fn new(c: f64, size: usize) -> Result<Self> {
        if !(c > 0.0) || size < 2 {
            return param("grid needs C > 0 and at least two points");
        }
        Ok(GridSpec { c, size })
    }

    /// Parses `C:size` or `C`.
    pub fn parse(s: &str) -> Result<Self> {
        let (c, size) = match s.split_once(':') {
            Some((c, n)) => (c, n.trim().parse::<usize>().map_err(|e| Error::Parameter(format!("bad grid size: {e}")))?),
            None => (s, DEFAULT_GRID_SIZE),
        };
        let c = c.trim().parse::<f64>().map_err(|e| Error::Parameter(format!("bad grid constant: {e}")))?;
        Self::new(c, size)
    }

    pub fn upper(&self, d: usize) -> f64 {
        (self.c * (d as f64).ln()).sqrt()
    }

    pub fn points(&self, d: usize) -> Vec<f64> {
        let hi = self.upper(d);
        (0..self.size).map(|g| hi * g as f64 / (self.size - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub lambda: f64,
    pub sure: f64,
    pub index: usize,
}

/// Soft-threshold risk estimate and loss along an increasing λ grid.
///
/// Sorting `|x_i|` once turns every grid evaluation into prefix-sum
/// lookups, so a whole curve costs `O(d log d + G)`.
#[derive(Debug, Clone)]
pub struct SoftThresholdPath {
    abs_sorted: Vec<f64>,
    pre_x2: Vec<f64>,
    pre_theta2: Vec<f64>,
    pre_resid2: Vec<f64>,
    pre_signed: Vec<f64>,
    total_theta2: f64,
    total_resid2: f64,
    total_signed: f64,
}

impl SoftThresholdPath {
    pub fn new(x: &[f64], theta: Option<&[f64]>) -> Self {
        let d = x.len();
        let mut idx: Vec<usize> = (0..d).collect();
        idx.sort_by(|a, b| x[*a].abs().total_cmp(&x[*b].abs()));
        let mut path = SoftThresholdPath {
            abs_sorted: Vec::with_capacity(d),
            pre_x2: vec![0.0],
            pre_theta2: vec![0.0],
            pre_resid2: vec![0.0],
            pre_signed: vec![0.0],
            total_theta2: 0.0,
            total_resid2: 0.0,
            total_signed: 0.0,
        };
        for &i in &idx {
            let t = theta.map_or(0.0, |t| t[i]);
            let r = x[i] - t;
            path.abs_sorted.push(x[i].abs());
            path.pre_x2.push(path.pre_x2.last().unwrap() + x[i] * x[i]);
            path.pre_theta2.push(path.pre_theta2.last().unwrap() + t * t);
            path.pre_resid2.push(path.pre_resid2.last().unwrap() + r * r);
            path.pre_signed.push(path.pre_signed.last().unwrap() + x[i].signum() * r);
        }
        path.total_theta2 = *path.pre_theta2.last().unwrap();
        path.total_resid2 = *path.pre_resid2.last().unwrap();
        path.total_signed = *path.pre_signed.last().unwrap();
        path
    }

    fn below(&self, lambda: f64) -> usize {
        self.abs_sorted.partition_point(|a| *a < lambda)
    }

    /// `dσ² + Σ min(x_i², λ²) − 2σ² #{|x_i| < λ}`.
    pub fn sure(&self, sigma2: f64, lambda: f64) -> f64 {
        let d = self.abs_sorted.len();
        let c = self.below(lambda);
        d as f64 * sigma2 + self.pre_x2[c] + lambda * lambda * (d - c) as f64 - 2.0 * sigma2 * c as f64
    }

    /// `‖S_λ(x) − θ‖²`.
    pub fn loss(&self, lambda: f64) -> f64 {
        let d = self.abs_sorted.len();
        let c = self.partition_le(lambda);
        let above = (d - c) as f64;
        self.pre_theta2[c] + (self.total_resid2 - self.pre_resid2[c]) - 2.0 * lambda * (self.total_signed - self.pre_signed[c])
            + lambda * lambda * above
    }

    fn partition_le(&self, lambda: f64) -> usize {
        self.abs_sorted.partition_point(|a| *a <= lambda)
    }

    /// Risk-estimate curve over `grid`.
    pub fn sure_curve(&self, sigma2: f64, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|l| self.sure(sigma2, *l)).collect()
    }
}

fn first_min(values: &[f64]) -> usize {
    let mut best = 0;
    for (g, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = g;
        }
    }
    best
}

/// Smallest grid minimiser of the risk estimate.
pub fn select_lambda(x: &[f64], sigma2: f64, grid: &GridSpec, kind: EstimatorKind) -> Result<Selection> {
    let d = x.len();
    if d < 2 {
        return param("lambda selection needs d >= 2");
    }
    if !(sigma2 >= 0.0) {
        return param("sigma2 must be nonnegative");
    }
    let points = grid.points(d);
    let values: Vec<f64> = match kind {
        EstimatorKind::Identity => vec![d as f64 * sigma2; points.len()],
        EstimatorKind::SoftThreshold => SoftThresholdPath::new(x, None).sure_curve(sigma2, &points),
        EstimatorKind::JamesStein => {
            let n2 = guard_norm2(x)?;
            points.iter().map(|l| d as f64 * sigma2 + l * (l - 2.0 * sigma2 * (d as f64 - 2.0)) / n2).collect()
        }
    };
    let index = first_min(&values);
    Ok(Selection { lambda: points[index], sure: values[index], index })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(james_stein(&[2.0, 0.0, 0.0, 0.0], 2.0).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(soft_threshold(&[0.5, -3.0], 1.0).unwrap(), vec![0.0, -2.0]);
        let js = EstimatorSpec::james_stein(4, 2.0).unwrap();
        assert!((sure(&[2.0, 0.0, 0.0, 0.0], &js, &Mat::identity(4)).unwrap() - 3.0).abs() < 1e-14);
        let st = EstimatorSpec::soft_threshold(2, 1.0).unwrap();
        assert!((sure(&[0.5, 3.0], &st, &Mat::identity(2)).unwrap() - 1.25).abs() < 1e-14);
        assert!(james_stein(&[0.0; 3], 1.0).is_err());
        let zero = EstimatorSpec::james_stein(3, 1.0).unwrap().with_define_zero(true);
        let mut out = [1.0; 3];
        zero.apply(&[0.0; 3], &mut out).unwrap();
        assert_eq!(out, [0.0; 3]);
    }

    #[test]
    fn soft_path_matches_direct_evaluation() {
        let x = [0.3, -2.0, 1.1, 0.0, 4.0, -0.7];
        let theta = [0.0, -1.0, 1.0, 0.5, 3.0, 0.0];
        let path = SoftThresholdPath::new(&x, Some(&theta));
        for lambda in [0.0, 0.2, 0.7, 1.5, 3.9, 5.0] {
            let st = EstimatorSpec::soft_threshold(6, lambda).unwrap();
            let direct = sure(&x, &st, &Mat::scalar(6, 1.7)).unwrap();
            assert!((path.sure(1.7, lambda) - direct).abs() < 1e-12);
            let loss = st.loss(&x, &theta, &mut [0.0; 6]).unwrap();
            assert!((path.loss(lambda) - loss).abs() < 1e-12);
        }
    }

    #[test]
    fn selection_edge_cases() {
        let grid = GridSpec::new(2.0, 64).unwrap();
        let s = select_lambda(&[0.0; 16], 1.0, &grid, EstimatorKind::SoftThreshold).unwrap();
        assert_eq!(s.index, 1);
        let s = select_lambda(&[50.0; 16], 1.0, &grid, EstimatorKind::SoftThreshold).unwrap();
        assert_eq!(s.lambda, 0.0);
    }
}
