use steinshrink::noise_models::{NoiseModel, UnivariateLaw};
use steinshrink::{Mat, Result};

use crate::config::ExperimentConfig;

pub const MODEL_NAMES: [&str; 10] = [
    "gaussian",
    "student",
    "laplace",
    "uniform",
    "sphere",
    "ball",
    "corrupted",
    "contaminated",
    "transformed",
    "four-point",
];

/// Unit-diagonal matrix with `0.4` below the diagonal.
pub fn bidiagonal(d: usize) -> Mat {
    let rows: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let mut r = vec![0.0; d];
            r[i] = 1.0;
            if i > 0 {
                r[i - 1] = 0.4;
            }
            r
        })
        .collect();
    Mat::from_rows(&rows).expect("square rows")
}

/// Centred noise model by name, before the location is attached.
///
/// `student` has dispersion `σ²`, so its covariance is `σ²k/(k−2)·Id`.
/// `four-point` is the planar law on `{±σe₁, ±σe₂}` and ignores `d`.
pub fn base_model(name: &str, d: usize, cfg: &ExperimentConfig) -> Result<NoiseModel> {
    let s2 = cfg.sigma2();
    let laplace = || NoiseModel::product(d, UnivariateLaw::laplace_with_variance(s2));
    match name {
        "gaussian" => NoiseModel::gaussian(d, s2),
        "student" => NoiseModel::student_with_dispersion(d, cfg.k, s2),
        "laplace" => laplace(),
        "uniform" => NoiseModel::product(d, UnivariateLaw::uniform_with_variance(s2)),
        "sphere" => NoiseModel::sphere(d, cfg.sigma),
        "ball" => NoiseModel::ball(d, cfg.sigma),
        "corrupted" => NoiseModel::corrupted_additive(cfg.eps, s2, laplace()?),
        "contaminated" => {
            let outlier = NoiseModel::student_with_dispersion(d, cfg.k, s2 * (cfg.k - 2.0) / cfg.k)?;
            NoiseModel::corrupted_mixing(cfg.eps, s2, outlier)
        }
        "transformed" => NoiseModel::linear_transform(bidiagonal(d), laplace()?),
        "four-point" => {
            let s = cfg.sigma;
            NoiseModel::finite_support(vec![vec![s, 0.0], vec![-s, 0.0], vec![0.0, s], vec![0.0, -s]])
        }
        other => Err(steinshrink::Error::Parameter(format!(
            "unknown model {other:?}; expected one of {}",
            MODEL_NAMES.join(", ")
        ))),
    }
}

/// Model with the configured location attached.
pub fn model(name: &str, d: usize, cfg: &ExperimentConfig) -> Result<NoiseModel> {
    let m = base_model(name, d, cfg)?;
    let theta = cfg.theta.resolve(m.d())?;
    m.with_theta(theta)
}
