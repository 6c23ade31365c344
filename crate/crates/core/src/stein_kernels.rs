//! Stein kernels: matrix fields `T` with `E⟨Y, f(θ+Y)⟩ = E⟨T(Y), ∇f(θ+Y)⟩`.
//!
//! Kernels are functions of the centred variable `y = x − θ`. Average and
//! mixture kernels depend on more than `y` and are only available through
//! joint draws ([`SteinKernel::draw`]).

use std::fmt;
use std::sync::Arc;

use crate::error::{param, Error, Result};
use crate::fields::VectorField;
use crate::mat::Mat;
use crate::mc::{self, RiskReport, Rng, Welford};
use crate::noise_models::{pick, Elliptical, Family, Generator, Need, NoiseModel, Scaling, UnivariateLaw};
use crate::quadrature::{integrate_to_inf, DEFAULT_REL_TOL};

/// Largest fraction of singular replicates tolerated by MC routines.
pub const SINGULAR_FRACTION: f64 = 1e-4;

pub type Density1d = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A one-dimensional Stein kernel.
#[derive(Clone)]
pub enum Kernel1d {
    ClosedForm(UnivariateLaw),
    /// `T(y) = p(y)^{-1} ∫_y^∞ (u − mean) p(u) du` by quadrature.
    Quadrature { density: Density1d, mean: f64, variance: f64 },
}

impl fmt::Debug for Kernel1d {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel1d::ClosedForm(l) => write!(f, "ClosedForm({l:?})"),
            Kernel1d::Quadrature { mean, variance, .. } => {
                write!(f, "Quadrature {{ mean: {mean}, variance: {variance} }}")
            }
        }
    }
}

impl Kernel1d {
    /// Quadrature path for a law that has a density.
    pub fn quadrature_for(law: UnivariateLaw) -> Result<Self> {
        law.density(0.0)?;
        Ok(Kernel1d::Quadrature {
            density: Arc::new(move |y| law.density(y).unwrap_or(0.0)),
            mean: 0.0,
            variance: law.variance(),
        })
    }

    pub fn variance(&self) -> f64 {
        match self {
            Kernel1d::ClosedForm(l) => l.variance(),
            Kernel1d::Quadrature { variance, .. } => *variance,
        }
    }

    pub fn eval(&self, y: f64) -> Result<f64> {
        match self {
            Kernel1d::ClosedForm(l) => l.stein_kernel(y),
            Kernel1d::Quadrature { density, mean, .. } => {
                let p = density(y);
                if !(p > 0.0) {
                    return Err(Error::Evaluation(format!("density vanishes at {y}")));
                }
                let m = *mean;
                let upper = integrate_to_inf(|u| (u - m) * density(u), y, DEFAULT_REL_TOL)?;
                Ok(upper.value / p)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum SteinKernel {
    /// `T ≡ Σ`, the Gaussian kernel.
    Constant(Mat),
    EllipticalRadial(Arc<Elliptical>),
    /// `T(y) = (‖y‖² + k s²)/(d + k − 2) · Id`.
    StudentClosedForm { k: f64, scale2: f64, d: usize },
    ProductDiagonal(Vec<Kernel1d>),
    /// `y ↦ A T(A^{-1} y) Aᵀ`.
    Transformed { a: Mat, a_inv: Mat, inner: Box<SteinKernel> },
    /// Kernel of `n^{-1/2} Σ_r Y_r` for i.i.d. copies `Y_r`.
    Average { base_model: Box<NoiseModel>, base: Box<SteinKernel>, n: usize },
    Mixture { pairs: Vec<(NoiseModel, SteinKernel)>, weights: Vec<f64> },
}

pub fn elliptical_kernel(generator: Generator, dispersion: Mat) -> Result<SteinKernel> {
    Ok(SteinKernel::EllipticalRadial(Arc::new(Elliptical::new(generator, dispersion)?)))
}

/// Closed-form Student kernel for dispersion `scale2`.
pub fn student_kernel(k: f64, d: usize, scale2: f64) -> Result<SteinKernel> {
    if !(k >= 5.0) || d == 0 || !(scale2 > 0.0) {
        return param(format!("student kernel needs k >= 5, d >= 1, positive dispersion (k = {k}, d = {d})"));
    }
    Ok(SteinKernel::StudentClosedForm { k, scale2, d })
}

pub fn product_kernel(components: Vec<Kernel1d>) -> Result<SteinKernel> {
    if components.is_empty() {
        return param("product kernel needs at least one coordinate");
    }
    Ok(SteinKernel::ProductDiagonal(components))
}

pub fn transform_kernel(kernel: SteinKernel, a: Mat) -> Result<SteinKernel> {
    if !a.is_square() || a.nrows() != kernel.dim() {
        return param("transform must be square and match the kernel dimension");
    }
    let a_inv = a.inverse()?;
    Ok(SteinKernel::Transformed { a, a_inv, inner: Box::new(kernel) })
}

pub fn average_kernel(base_model: NoiseModel, base: SteinKernel, n: usize) -> Result<SteinKernel> {
    if n == 0 {
        return param("average of zero copies");
    }
    if base_model.d() != base.dim() {
        return param("kernel and model dimensions differ");
    }
    let (m, c) = (base.mean()?, base_model.cov()?);
    if m.frobenius_dist2(&c) > 1e-18 * (1.0 + c.frobenius_inner(&c)) {
        return param("kernel mean does not match the model covariance");
    }
    Ok(SteinKernel::Average { base_model: Box::new(base_model), base: Box::new(base), n })
}

pub fn mixture_kernel(pairs: Vec<(NoiseModel, SteinKernel)>, weights: Vec<f64>) -> Result<SteinKernel> {
    if pairs.is_empty() || pairs.len() != weights.len() {
        return param("mixture kernel needs one weight per component");
    }
    if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return param("mixture weights must be nonnegative and sum to one");
    }
    let d = pairs[0].0.d();
    if pairs.iter().any(|(m, k)| m.d() != d || k.dim() != d) {
        return param("mixture components must share the dimension");
    }
    Ok(SteinKernel::Mixture { pairs, weights })
}

/// The natural kernel of a model's centred part, when one is known.
pub fn kernel_for(model: &NoiseModel) -> Result<SteinKernel> {
    let d = model.d();
    let base = match model.family() {
        Family::GaussianIso { sigma2 } => SteinKernel::Constant(Mat::scalar(d, *sigma2)),
        Family::StudentT { k, scale2 } => student_kernel(*k, d, *scale2)?,
        Family::ProductIid { law } => {
            law.stein_kernel(0.0)?;
            SteinKernel::ProductDiagonal(vec![Kernel1d::ClosedForm(*law); d])
        }
        Family::Elliptical(e) => SteinKernel::EllipticalRadial(e.clone()),
        Family::BallUniform { sigma } => {
            let r = sigma * (d as f64).sqrt();
            let custom = Generator::custom("ball", move |t: f64| if t <= 0.5 * r * r { 1.0 } else { 0.0 });
            elliptical_kernel(custom, Mat::identity(d))?
        }
        Family::LinearTransform { a, base } => {
            let inner = kernel_for(base)?;
            transform_kernel(inner, a.clone())?
        }
        Family::Mixture { components, weights, offsets } => {
            if offsets.iter().flatten().any(|v| *v != 0.0) {
                return param("mixture kernel needs components with a common location");
            }
            let pairs = components
                .iter()
                .map(|c| Ok((c.clone(), kernel_for(c)?)))
                .collect::<Result<Vec<_>>>()?;
            mixture_kernel(pairs, weights.clone())?
        }
        Family::CorruptedMixing { eps, sigma2, outlier } => {
            let g = NoiseModel::gaussian(d, *sigma2)?;
            let gk = SteinKernel::Constant(Mat::scalar(d, *sigma2));
            mixture_kernel(vec![(g, gk), ((**outlier).clone(), kernel_for(outlier)?)], vec![1.0 - eps, *eps])?
        }
        Family::CorruptedAdditive { eps, outlier, .. } if *eps == 0.0 || matches!(outlier.family(), Family::GaussianIso { .. }) => {
            SteinKernel::Constant(model.clone().with_scaling(Scaling::Standard).cov()?)
        }
        _ => {
            return Err(Error::DensityUnavailable(format!("no Stein kernel available for {}", model.name())))
        }
    };
    match model.scaling() {
        Scaling::Standard => Ok(base),
        Scaling::Pinsker => scale_kernel(base, model.scale_factor()),
    }
}

fn scale_kernel(kernel: SteinKernel, c: f64) -> Result<SteinKernel> {
    let d = kernel.dim();
    match kernel {
        SteinKernel::Constant(m) => Ok(SteinKernel::Constant(m.scale(c * c))),
        other => transform_kernel(other, Mat::scalar(d, c)),
    }
}

impl SteinKernel {
    pub fn dim(&self) -> usize {
        match self {
            SteinKernel::Constant(m) => m.nrows(),
            SteinKernel::EllipticalRadial(e) => e.d,
            SteinKernel::StudentClosedForm { d, .. } => *d,
            SteinKernel::ProductDiagonal(c) => c.len(),
            SteinKernel::Transformed { a, .. } => a.nrows(),
            SteinKernel::Average { base, .. } => base.dim(),
            SteinKernel::Mixture { pairs, .. } => pairs[0].1.dim(),
        }
    }

    pub fn construction(&self) -> &'static str {
        match self {
            SteinKernel::Constant(_) => "constant",
            SteinKernel::EllipticalRadial(_) => "elliptical-radial",
            SteinKernel::StudentClosedForm { .. } => "student-closed-form",
            SteinKernel::ProductDiagonal(_) => "product-diagonal",
            SteinKernel::Transformed { .. } => "transformed",
            SteinKernel::Average { .. } => "average",
            SteinKernel::Mixture { .. } => "mixture",
        }
    }

    /// Whether `T` is a function of the centred observation alone.
    pub fn is_pointwise(&self) -> bool {
        match self {
            SteinKernel::Average { .. } | SteinKernel::Mixture { .. } => false,
            SteinKernel::Transformed { inner, .. } => inner.is_pointwise(),
            _ => true,
        }
    }

    /// `E[T]`, equal to the covariance of the underlying law.
    pub fn mean(&self) -> Result<Mat> {
        Ok(match self {
            SteinKernel::Constant(m) => m.clone(),
            SteinKernel::EllipticalRadial(e) => e.cov()?,
            SteinKernel::StudentClosedForm { k, scale2, d } => Mat::scalar(*d, scale2 * k / (k - 2.0)),
            SteinKernel::ProductDiagonal(c) => {
                let v: Vec<f64> = c.iter().map(Kernel1d::variance).collect();
                if v.iter().all(|x| *x == v[0]) {
                    Mat::scalar(v.len(), v[0])
                } else {
                    Mat::Diag(v)
                }
            }
            SteinKernel::Transformed { a, inner, .. } => a.congruence(&inner.mean()?),
            SteinKernel::Average { base, .. } => base.mean()?,
            SteinKernel::Mixture { pairs, weights } => {
                let mut acc = pairs[0].1.mean()?.scale(weights[0]);
                for ((_, k), w) in pairs.iter().zip(weights).skip(1) {
                    acc = acc.add(&k.mean()?.scale(*w));
                }
                acc
            }
        })
    }

    /// `T(y)` for pointwise kernels.
    pub fn evaluate(&self, y: &[f64]) -> Result<Mat> {
        let d = self.dim();
        if y.len() != d {
            return param(format!("point has length {} but kernel dimension is {d}", y.len()));
        }
        match self {
            SteinKernel::Constant(m) => Ok(m.clone()),
            SteinKernel::EllipticalRadial(e) => {
                let f = e.generator.kernel_factor(e.quad(y), d)?;
                Ok(e.dispersion.scale(f))
            }
            SteinKernel::StudentClosedForm { k, scale2, d } => {
                let n2: f64 = y.iter().map(|v| v * v).sum();
                Ok(Mat::scalar(*d, (n2 + k * scale2) / (*d as f64 + k - 2.0)))
            }
            SteinKernel::ProductDiagonal(c) => {
                let v = c.iter().zip(y).map(|(k, yi)| k.eval(*yi)).collect::<Result<Vec<_>>>()?;
                Ok(Mat::Diag(v))
            }
            SteinKernel::Transformed { a, a_inv, inner } => {
                let mut u = vec![0.0; d];
                a_inv.mul_vec(y, &mut u);
                Ok(a.congruence(&inner.evaluate(&u)?))
            }
            SteinKernel::Average { .. } | SteinKernel::Mixture { .. } => Err(Error::Parameter(
                "average and mixture kernels are only available through joint draws".into(),
            )),
        }
    }

    /// Draws a centred observation into `y` together with the kernel value
    /// attached to that draw. Pointwise kernels sample `y` from `model`;
    /// joint kernels use their own component laws.
    pub fn draw(&self, model: Option<&NoiseModel>, rng: &mut Rng, y: &mut [f64]) -> Result<Mat> {
        match self {
            SteinKernel::Average { base_model, base, n } => {
                let d = y.len();
                let mut buf = vec![0.0; d];
                y.iter_mut().for_each(|v| *v = 0.0);
                let mut acc: Option<Mat> = None;
                for _ in 0..*n {
                    let t = base.draw(Some(base_model), rng, &mut buf)?;
                    y.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
                    acc = Some(match acc {
                        None => t,
                        Some(a) => a.add(&t),
                    });
                }
                let inv = 1.0 / *n as f64;
                y.iter_mut().for_each(|v| *v *= inv.sqrt());
                Ok(acc.expect("n >= 1").scale(inv))
            }
            SteinKernel::Mixture { pairs, weights } => {
                let s = pick(rng, weights);
                let (m, k) = &pairs[s];
                k.draw(Some(m), rng, y)
            }
            SteinKernel::Transformed { a, inner, .. } if !inner.is_pointwise() => {
                let mut u = vec![0.0; y.len()];
                let t = inner.draw(None, rng, &mut u)?;
                a.mul_vec(&u, y);
                Ok(a.congruence(&t))
            }
            _ => {
                let model = model.ok_or_else(|| Error::Parameter("pointwise kernel needs a model to draw from".into()))?;
                model.sample_centered(rng, y);
                self.evaluate(y)
            }
        }
    }
}

/// Monte Carlo summary of how far a kernel is from the constant `Σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancyStats {
    pub e_trace_t: f64,
    pub e_trace_t_se: f64,
    pub var_trace_t: f64,
    pub var_trace_t_se: f64,
    pub e_frob_t_minus_sigma_sq: f64,
    pub e_frob_t_minus_sigma_sq_se: f64,
    pub n: u64,
}

impl DiscrepancyStats {
    /// Statistics of a constant kernel with the given trace.
    pub fn zero(trace: f64) -> Self {
        DiscrepancyStats {
            e_trace_t: trace,
            e_trace_t_se: 0.0,
            var_trace_t: 0.0,
            var_trace_t_se: 0.0,
            e_frob_t_minus_sigma_sq: 0.0,
            e_frob_t_minus_sigma_sq_se: 0.0,
            n: 0,
        }
    }
}

pub fn discrepancy_stats(model: &NoiseModel, kernel: &SteinKernel, n: u64, seed: u64) -> Result<DiscrepancyStats> {
    if n < 2 {
        return param("discrepancy statistics need at least two replicates");
    }
    let sigma = kernel.mean()?;
    let tr_sigma = sigma.trace();
    let d = model.d();
    let out = mc::run::<3, _, _, _>(
        n,
        seed,
        || vec![0.0; d],
        |y, rng| {
            let t = kernel.draw(Some(model), rng, y)?;
            let tr = t.trace();
            Ok([tr, (tr - tr_sigma).powi(2), t.frobenius_dist2(&sigma)])
        },
    )?;
    let [tr, sq, frob]: [Welford; 3] = out.acc;
    Ok(DiscrepancyStats {
        e_trace_t: tr.mean(),
        e_trace_t_se: tr.stderr(),
        var_trace_t: (sq.mean() - (tr.mean() - tr_sigma).powi(2)).max(0.0),
        var_trace_t_se: sq.stderr(),
        e_frob_t_minus_sigma_sq: frob.mean(),
        e_frob_t_minus_sigma_sq_se: frob.stderr(),
        n,
    })
}

/// MC estimate of `E⟨X−θ, f(X)⟩ − E⟨T, ∇f(X)⟩`.
pub fn stein_identity_residual(
    model: &NoiseModel,
    kernel: &SteinKernel,
    test_fn: &dyn VectorField,
    n: u64,
    seed: u64,
) -> Result<RiskReport> {
    let d = model.d();
    if kernel.dim() != d || test_fn.dim() != d {
        return param("model, kernel and test function dimensions differ");
    }
    if test_fn.name() == "g0" {
        let report = model.validity_check(Need::Kernel);
        if !report.ok {
            return param(format!("invalid-by-validity-check: {}", report.reasons.join("; ")));
        }
    }
    let theta = model.theta();
    let out = mc::run::<1, _, _, _>(
        n,
        seed,
        || (vec![0.0; d], vec![0.0; d], vec![0.0; d]),
        |(y, x, fx), rng| {
            let t = kernel.draw(Some(model), rng, y)?;
            for ((xi, yi), ti) in x.iter_mut().zip(y.iter()).zip(theta) {
                *xi = yi + ti;
            }
            test_fn.eval(x, fx)?;
            let lhs: f64 = y.iter().zip(fx.iter()).map(|(a, b)| a * b).sum();
            Ok([lhs - test_fn.jacobian_inner(&t, x)?])
        },
    )?
    .guard(SINGULAR_FRACTION)?;
    Ok(out.report(0, seed, format!("stein-residual {} {} {}", model.name(), kernel.construction(), test_fn.name())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn student_kernel_at_origin() {
        let k = student_kernel(6.0, 6, 1.5).unwrap();
        assert_eq!(k.evaluate(&[0.0; 6]).unwrap(), Mat::scalar(6, 0.9));
        let k = student_kernel(1e6, 3, 1.0).unwrap();
        let t = k.evaluate(&[0.5, -1.0, 2.0]).unwrap().as_scalar().unwrap();
        assert!((t - 1.0).abs() < 1e-5);
    }

    #[test]
    fn gaussian_fixed_point_through_every_path() {
        let sigma2 = 1.7;
        let y = [0.3, -2.0, 1.1];
        let g = NoiseModel::gaussian(3, sigma2).unwrap();
        let target = Mat::scalar(3, sigma2);
        let paths = vec![
            kernel_for(&g).unwrap(),
            elliptical_kernel(Generator::Gaussian, Mat::scalar(3, sigma2)).unwrap(),
            product_kernel(vec![Kernel1d::ClosedForm(UnivariateLaw::Gaussian { var: sigma2 }); 3]).unwrap(),
        ];
        for k in paths {
            assert!(k.evaluate(&y).unwrap().frobenius_dist2(&target) < 1e-24, "{}", k.construction());
        }
        let q = product_kernel(vec![Kernel1d::quadrature_for(UnivariateLaw::Gaussian { var: sigma2 }).unwrap(); 3]).unwrap();
        assert!(q.evaluate(&y).unwrap().frobenius_dist2(&target) < 1e-18);
    }

    #[test]
    fn laplace_quadrature_matches_closed_form() {
        let law = UnivariateLaw::Laplace { b: 0.7 };
        let q = Kernel1d::quadrature_for(law).unwrap();
        for y in [-3.0, -0.2, 0.0, 0.5, 4.0] {
            let exact = 0.7 * (f64::abs(y) + 0.7);
            assert!((q.eval(y).unwrap() / exact - 1.0).abs() < 1e-10);
        }
        let u = Kernel1d::quadrature_for(UnivariateLaw::Uniform { a: 2.0 }).unwrap();
        assert!((u.eval(0.5).unwrap() - (4.0 - 0.25) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn transform_roundtrip() {
        let base = product_kernel(vec![Kernel1d::ClosedForm(UnivariateLaw::Laplace { b: 1.0 }); 2]).unwrap();
        let a = Mat::from_rows(&[vec![1.0, 0.5], vec![-0.3, 2.0]]).unwrap();
        let back = transform_kernel(transform_kernel(base.clone(), a.clone()).unwrap(), a.inverse().unwrap()).unwrap();
        let y = [0.4, -1.3];
        let d = back.evaluate(&y).unwrap().frobenius_dist2(&base.evaluate(&y).unwrap());
        assert!(d < 1e-20);
        let scaled = transform_kernel(SteinKernel::Constant(Mat::scalar(2, 1.5)), Mat::scalar(2, 3.0)).unwrap();
        assert_eq!(scaled.evaluate(&y).unwrap().as_scalar(), Some(13.5));
    }
}
