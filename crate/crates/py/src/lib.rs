//! Python bindings for noise models, estimators, identity checks and risk estimates.

use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use steinshrink::estimation::{self, EstimatorKind, EstimatorSpec, GridSpec};
use steinshrink::fields::{CoordinateQuadratic, InverseNormField, LinearField, SumProjection, VectorField};
use steinshrink::noise_models::{Need, NoiseModel, Scaling, UnivariateLaw};
use steinshrink::{risk_lab, stein_kernels, zero_bias, Mat};

fn err(e: steinshrink::Error) -> PyErr {
    use steinshrink::Error as E;
    match e {
        E::NumericalGuard(_) | E::Singular(_) => PyArithmeticError::new_err(e.to_string()),
        E::Quadrature(_) | E::Sampling(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for steinshrink::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(err)
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<Mat> {
    Mat::from_rows(rows).py()
}

fn rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i)).collect()
}

/// Monte Carlo mean with its standard error.
#[pyclass(name = "RiskReport", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyRiskReport {
    #[pyo3(get)]
    mean: f64,
    #[pyo3(get)]
    stderr: f64,
    #[pyo3(get)]
    n: u64,
    #[pyo3(get)]
    seed: u64,
    #[pyo3(get)]
    label: String,
}

impl From<steinshrink::RiskReport> for PyRiskReport {
    fn from(r: steinshrink::RiskReport) -> Self {
        PyRiskReport { mean: r.mean, stderr: r.stderr, n: r.n, seed: r.seed, label: r.label }
    }
}

#[pymethods]
impl PyRiskReport {
    /// Whether `|mean − target| <= k·stderr + atol`.
    #[pyo3(signature = (target, k = 3.0, atol = 1e-12))]
    fn within(&self, target: f64, k: f64, atol: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + atol
    }

    fn __repr__(&self) -> String {
        format!("RiskReport(mean={}, stderr={}, n={}, label={:?})", self.mean, self.stderr, self.n, self.label)
    }
}

#[pyclass(name = "NoiseModel", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyNoiseModel {
    inner: NoiseModel,
}

fn wrap(m: steinshrink::Result<NoiseModel>) -> PyResult<PyNoiseModel> {
    m.py().map(|inner| PyNoiseModel { inner })
}

#[pymethods]
impl PyNoiseModel {
    #[staticmethod]
    fn gaussian(d: usize, sigma2: f64) -> PyResult<Self> {
        wrap(NoiseModel::gaussian(d, sigma2))
    }

    /// Student law with dispersion `scale2`; covariance `scale2·k/(k−2)·Id`.
    #[staticmethod]
    #[pyo3(signature = (d, k, scale2 = 1.0))]
    fn student(d: usize, k: f64, scale2: f64) -> PyResult<Self> {
        wrap(NoiseModel::student_with_dispersion(d, k, scale2))
    }

    #[staticmethod]
    fn sphere(d: usize, sigma: f64) -> PyResult<Self> {
        wrap(NoiseModel::sphere(d, sigma))
    }

    #[staticmethod]
    fn ball(d: usize, sigma: f64) -> PyResult<Self> {
        wrap(NoiseModel::ball(d, sigma))
    }

    #[staticmethod]
    fn laplace(d: usize, variance: f64) -> PyResult<Self> {
        wrap(NoiseModel::product(d, UnivariateLaw::laplace_with_variance(variance)))
    }

    #[staticmethod]
    fn uniform(d: usize, variance: f64) -> PyResult<Self> {
        wrap(NoiseModel::product(d, UnivariateLaw::uniform_with_variance(variance)))
    }

    #[staticmethod]
    fn finite_support(points: Vec<Vec<f64>>) -> PyResult<Self> {
        wrap(NoiseModel::finite_support(points))
    }

    #[staticmethod]
    fn mixture(components: Vec<PyNoiseModel>, weights: Vec<f64>) -> PyResult<Self> {
        wrap(NoiseModel::mixture(components.into_iter().map(|c| c.inner).collect(), weights))
    }

    #[staticmethod]
    fn corrupted_additive(eps: f64, sigma2: f64, outlier: PyNoiseModel) -> PyResult<Self> {
        wrap(NoiseModel::corrupted_additive(eps, sigma2, outlier.inner))
    }

    #[staticmethod]
    fn corrupted_mixing(eps: f64, sigma2: f64, outlier: PyNoiseModel) -> PyResult<Self> {
        wrap(NoiseModel::corrupted_mixing(eps, sigma2, outlier.inner))
    }

    #[staticmethod]
    fn linear_transform(a: Vec<Vec<f64>>, base: PyNoiseModel) -> PyResult<Self> {
        wrap(NoiseModel::linear_transform(matrix(&a)?, base.inner))
    }

    fn with_theta(&self, theta: Vec<f64>) -> PyResult<Self> {
        wrap(self.inner.clone().with_theta(theta))
    }

    /// Coordinates scaled by `1/√d`, so each has variance `σ²/d`.
    fn pinsker(&self) -> Self {
        PyNoiseModel { inner: self.inner.clone().with_scaling(Scaling::Pinsker) }
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.theta().to_vec()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name()
    }

    fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        self.inner.sample(n, seed).py()
    }

    fn cov(&self) -> PyResult<Vec<Vec<f64>>> {
        self.inner.cov().py().map(|m| rows(&m))
    }

    fn log_density(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.log_density(&x).py()
    }

    /// `(ok, reasons)` for the `"kernel"` or `"zero-bias"` identity.
    fn validity_check(&self, need: &str) -> PyResult<(bool, Vec<String>)> {
        let need = match need {
            "kernel" => Need::Kernel,
            "zero-bias" => Need::ZeroBias,
            other => return Err(PyValueError::new_err(format!("unknown need {other:?}"))),
        };
        let r = self.inner.validity_check(need);
        Ok((r.ok, r.reasons))
    }

    fn __repr__(&self) -> String {
        format!("NoiseModel({})", self.inner.name())
    }
}

#[pyclass(name = "Estimator", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyEstimator {
    inner: EstimatorSpec,
}

#[pymethods]
impl PyEstimator {
    #[staticmethod]
    fn james_stein(d: usize, lam: f64) -> PyResult<Self> {
        EstimatorSpec::james_stein(d, lam).py().map(|inner| PyEstimator { inner })
    }

    #[staticmethod]
    fn soft_threshold(d: usize, lam: f64) -> PyResult<Self> {
        EstimatorSpec::soft_threshold(d, lam).py().map(|inner| PyEstimator { inner })
    }

    #[staticmethod]
    fn identity(d: usize) -> Self {
        PyEstimator { inner: EstimatorSpec::identity(d) }
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name()
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.inner.lambda
    }

    fn apply(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.inner.apply(&x, &mut out).py()?;
        Ok(out)
    }

    fn loss(&self, x: Vec<f64>, theta: Vec<f64>) -> PyResult<f64> {
        let mut buf = vec![0.0; x.len()];
        self.inner.loss(&x, &theta, &mut buf).py()
    }

    /// Gaussian risk estimate with covariance `sigma2·Id`.
    fn sure(&self, x: Vec<f64>, sigma2: f64) -> PyResult<f64> {
        estimation::sure(&x, &self.inner, &Mat::scalar(x.len(), sigma2)).py()
    }

    fn __repr__(&self) -> String {
        format!("Estimator({})", self.inner.name())
    }
}

fn test_field(name: &str, d: usize) -> PyResult<Box<dyn VectorField>> {
    Ok(match name {
        "linear" => Box::new(LinearField::identity(d)),
        "coord-quadratic" => Box::new(CoordinateQuadratic { d, i: 1.min(d.saturating_sub(1)) }),
        "g0" => Box::new(InverseNormField { d }),
        "sum-projection" => Box::new(SumProjection { d }),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown test function {other:?}; expected linear, coord-quadratic, g0 or sum-projection"
            )))
        }
    })
}

#[pyfunction]
fn mc_risk(model: &PyNoiseModel, est: &PyEstimator, n: u64, seed: u64) -> PyResult<PyRiskReport> {
    risk_lab::mc_risk(&model.inner, &est.inner, n, seed).py().map(Into::into)
}

#[pyfunction]
fn mc_excess_risk(model: &PyNoiseModel, lam: f64, n: u64, seed: u64) -> PyResult<PyRiskReport> {
    risk_lab::mc_excess_risk(&model.inner, lam, n, seed).py().map(Into::into)
}

/// `(sure, risk, bias)` from one set of draws.
#[pyfunction]
fn sure_bias(model: &PyNoiseModel, est: &PyEstimator, n: u64, seed: u64) -> PyResult<(PyRiskReport, PyRiskReport, PyRiskReport)> {
    let (s, r, b) = risk_lab::sure_bias_full(&model.inner, &est.inner, n, seed).py()?;
    Ok((s.into(), r.into(), b.into()))
}

/// `(lambda, sure)` minimising the risk estimate over the grid `[0, √(c log d)]`.
#[pyfunction]
#[pyo3(signature = (x, sigma2, c = 2.0, size = 512, kind = "soft-threshold"))]
fn select_lambda(x: Vec<f64>, sigma2: f64, c: f64, size: usize, kind: &str) -> PyResult<(f64, f64)> {
    let kind = EstimatorKind::parse(kind).py()?;
    let s = estimation::select_lambda(&x, sigma2, &GridSpec::new(c, size).py()?, kind).py()?;
    Ok((s.lambda, s.sure))
}

/// Stein identity residual with the model's own kernel.
#[pyfunction]
fn stein_identity_residual(model: &PyNoiseModel, test_function: &str, n: u64, seed: u64) -> PyResult<PyRiskReport> {
    let k = stein_kernels::kernel_for(&model.inner).py()?;
    let f = test_field(test_function, model.inner.d())?;
    stein_kernels::stein_identity_residual(&model.inner, &k, f.as_ref(), n, seed).py().map(Into::into)
}

/// Zero-bias identity residual with the model's default coupling.
#[pyfunction]
fn zb_identity_residual(model: &PyNoiseModel, test_function: &str, n: u64, seed: u64) -> PyResult<PyRiskReport> {
    let c = zero_bias::coupling_for(&model.inner).py()?;
    let f = test_field(test_function, model.inner.d())?;
    zero_bias::zb_identity_residual(&model.inner, &c, f.as_ref(), n, seed).py().map(Into::into)
}

/// `(Var Tr T, E‖T − Σ‖²)` as reports.
#[pyfunction]
fn discrepancy_stats(model: &PyNoiseModel, n: u64, seed: u64) -> PyResult<(PyRiskReport, PyRiskReport)> {
    let k = stein_kernels::kernel_for(&model.inner).py()?;
    let s = stein_kernels::discrepancy_stats(&model.inner, &k, n, seed).py()?;
    let report = |mean: f64, stderr: f64, label: &str| PyRiskReport { mean, stderr, n: s.n, seed, label: label.into() };
    Ok((
        report(s.var_trace_t, s.var_trace_t_se, "var-trace-t"),
        report(s.e_frob_t_minus_sigma_sq, s.e_frob_t_minus_sigma_sq_se, "e-frob-t-minus-sigma"),
    ))
}

/// Zero-bias remainder of the shrinkage estimator under the default coupling.
#[pyfunction]
fn bound_b_star(model: &PyNoiseModel, lam: f64, n: u64, seed: u64) -> PyResult<PyRiskReport> {
    let c = zero_bias::coupling_for(&model.inner).py()?;
    risk_lab::bound_b_star(&model.inner, &c, lam, n, seed).py().map(Into::into)
}

#[pyfunction]
fn pinsker_limit(sigma2: f64, c2: f64) -> PyResult<f64> {
    risk_lab::pinsker_limit(sigma2, c2).py()
}

#[pyfunction]
fn sphere_crossing(c: f64, big_c: f64) -> PyResult<f64> {
    risk_lab::sphere_crossing(c, big_c).py()
}

/// `(bound, valid)` for `E[(d/‖X‖²)^m]`.
#[pyfunction]
fn inverse_moment_bound(c: f64, mu: f64, q: f64, m: u32, d: usize) -> PyResult<(f64, bool)> {
    let b = risk_lab::inverse_moment_bound(c, mu, q, m, d).py()?;
    Ok((b.bound, b.valid))
}

/// `(selected risk, mean selected λ, best grid risk, best grid λ)`.
#[pyfunction]
#[pyo3(signature = (model, n, seed, c = 2.0, size = 512))]
fn soft_threshold_calibration(model: &PyNoiseModel, n: u64, seed: u64, c: f64, size: usize) -> PyResult<(PyRiskReport, f64, PyRiskReport, f64)> {
    let cal = risk_lab::soft_threshold_calibration(&model.inner, &GridSpec::new(c, size).py()?, n, seed).py()?;
    let best = cal.grid_risk[cal.best].clone();
    Ok((cal.selected.into(), cal.mean_lambda_hat, best.into(), cal.grid[cal.best]))
}

#[pymodule]
#[pyo3(name = "steinshrink")]
fn steinshrink_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRiskReport>()?;
    m.add_class::<PyNoiseModel>()?;
    m.add_class::<PyEstimator>()?;
    m.add_function(wrap_pyfunction!(mc_risk, m)?)?;
    m.add_function(wrap_pyfunction!(mc_excess_risk, m)?)?;
    m.add_function(wrap_pyfunction!(sure_bias, m)?)?;
    m.add_function(wrap_pyfunction!(select_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(stein_identity_residual, m)?)?;
    m.add_function(wrap_pyfunction!(zb_identity_residual, m)?)?;
    m.add_function(wrap_pyfunction!(discrepancy_stats, m)?)?;
    m.add_function(wrap_pyfunction!(bound_b_star, m)?)?;
    m.add_function(wrap_pyfunction!(pinsker_limit, m)?)?;
    m.add_function(wrap_pyfunction!(sphere_crossing, m)?)?;
    m.add_function(wrap_pyfunction!(inverse_moment_bound, m)?)?;
    m.add_function(wrap_pyfunction!(soft_threshold_calibration, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
