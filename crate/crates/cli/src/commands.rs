use steinshrink::estimation::{EstimatorKind, EstimatorSpec};
use steinshrink::fields::{CoordinateQuadratic, InverseNormField, LinearField, SumProjection, VectorField};
use steinshrink::noise_models::{Family, NoiseModel, Scaling, ThetaSpec};
use steinshrink::risk_lab::{
    adaptivity_bound_kernel, b_lambda, bound_b_star, bound_thm31, bound_thm33, bound_zero_bias, e_inv2, e_inv_moment,
    estimator, gaussian_inputs, mc_excess_risk, mc_risk, paired_excess, pinsker_limit, soft_threshold_calibration,
    sphere_crossing, sphere_gain, sphere_two_b_star, student_b_star_bound, student_constants, sure_bias_full, BoundInputs,
    Tagged,
};
use steinshrink::stein_kernels::{discrepancy_stats, kernel_for, stein_identity_residual, DiscrepancyStats};
use steinshrink::zero_bias::{couple_student, coupling_for, zb_identity_residual, ZeroBiasCoupling};
use steinshrink::{Mat, RiskReport};

use crate::config::ExperimentConfig;
use crate::models::{self, MODEL_NAMES};
use crate::{fmt_num, fmt_opt, CliError, Table};

const INVALID: &str = "invalid-by-validity-check";

fn single_model(cfg: &ExperimentConfig) -> Result<NoiseModel, CliError> {
    match cfg.models.as_slice() {
        [name] => Ok(models::model(name, cfg.d, cfg)?),
        _ => Err(CliError::Usage(format!("{} takes exactly one --model", cfg.command.name()))),
    }
}

fn mean_variance(model: &NoiseModel) -> Result<f64, CliError> {
    Ok(model.cov()?.trace() / model.d() as f64)
}

fn lambdas(cfg: &ExperimentConfig, default: f64) -> Vec<f64> {
    cfg.lambda.clone().unwrap_or_else(|| vec![default])
}

fn is_gaussian(model: &NoiseModel) -> bool {
    matches!(model.family(), Family::GaussianIso { .. })
}

/// Bound ingredients that do not depend on λ.
struct Ingredients {
    e_inv2: Option<f64>,
    e_d2_inv4: Option<f64>,
    discrepancy: Option<DiscrepancyStats>,
    coupling: Option<ZeroBiasCoupling>,
}

/// Guard aborts propagate; anything else only blanks the affected bound.
fn optional<T>(r: steinshrink::Result<T>) -> Result<Option<T>, CliError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(steinshrink::Error::NumericalGuard(m)) => Err(CliError::Guard(m)),
        Err(_) => Ok(None),
    }
}

impl Ingredients {
    fn estimate(model: &NoiseModel, n: u64, seed: u64) -> Result<Self, CliError> {
        let discrepancy = match optional(kernel_for(model))? {
            Some(k) => optional(discrepancy_stats(model, &k, n, seed.wrapping_add(3)))?,
            None => None,
        };
        Ok(Ingredients {
            e_inv2: optional(e_inv2(model, n, seed.wrapping_add(1)))?.map(|r| r.mean),
            e_d2_inv4: optional(e_inv_moment(model, 2, n, seed.wrapping_add(2)))?.map(|r| r.mean),
            discrepancy,
            coupling: optional(coupling_for(model))?,
        })
    }

    fn inputs(&self, model: &NoiseModel, lambda: f64) -> Result<BoundInputs, CliError> {
        let mut b = BoundInputs::from_model(model, lambda)?;
        b.e_inv2 = self.e_inv2.map(Tagged::estimate);
        b.e_d2_inv4 = self.e_d2_inv4.map(Tagged::estimate);
        b.discrepancy = self.discrepancy.clone();
        Ok(b)
    }

    fn b_star(&self, model: &NoiseModel, lambda: f64, n: u64, seed: u64) -> Result<Option<RiskReport>, CliError> {
        match &self.coupling {
            Some(c) => optional(bound_b_star(model, c, lambda, n, seed.wrapping_add(4))),
            None => Ok(None),
        }
    }
}

/// Columns `label, lambda, mean, stderr, n, seed, bound_thm31, bound_thm33, bound_zb`.
///
/// Each λ gives a `risk` row and an `excess` row (loss minus the loss of the
/// identity on the same draws). Bounds apply to the shrinkage estimator only;
/// on `excess` rows they are shifted by `Tr Σ`.
pub fn cmd_risk(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let model = single_model(cfg)?;
    let d = model.d();
    let trace = model.cov()?.trace();
    let mut t = Table::new(&["label", "lambda", "mean", "stderr", "n", "seed", "bound_thm31", "bound_thm33", "bound_zb"]);
    let with_bounds = cfg.bounds && cfg.estimator == EstimatorKind::JamesStein;
    let ing = if with_bounds { Some(Ingredients::estimate(&model, cfg.reps, cfg.seed)?) } else { None };
    for lambda in lambdas(cfg, mean_variance(&model)? * (d as f64 - 2.0).max(0.0)) {
        let est = estimator(cfg.estimator, d, lambda)?;
        let risk = mc_risk(&model, &est, cfg.reps, cfg.seed)?;
        let excess = paired_excess(&model, &est, cfg.reps, cfg.seed)?;
        let (mut b31, mut b33, mut bzb) = (None, None, None);
        if let Some(ing) = &ing {
            if is_gaussian(&model) {
                if let Some(e) = ing.e_inv2 {
                    b31 = optional(bound_thm31(&gaussian_inputs(&model, lambda, e)?))?;
                }
            }
            let inputs = ing.inputs(&model, lambda)?;
            b33 = optional(bound_thm33(&inputs))?;
            if let Some(bs) = ing.b_star(&model, lambda, cfg.reps, cfg.seed)? {
                bzb = optional(bound_zero_bias(&inputs, bs.mean))?;
            }
        }
        let name = est.name();
        for (label, r, shift) in [("risk", &risk, 0.0), ("excess", &excess, trace)] {
            t.push(vec![
                format!("{label} {name}"),
                fmt_num(lambda),
                fmt_num(r.mean),
                fmt_num(r.stderr),
                r.n.to_string(),
                r.seed.to_string(),
                fmt_opt(b31.map(|b| b - shift)),
                fmt_opt(b33.map(|b| b - shift)),
                fmt_opt(bzb.map(|b| b - shift)),
            ]);
        }
    }
    Ok(t)
}

fn test_fields(d: usize) -> Vec<Box<dyn VectorField>> {
    let rows: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let mut r = vec![0.0; d];
            r[i] = 1.0 + 0.1 * i as f64;
            if i + 1 < d {
                r[i + 1] = 0.5;
            }
            r
        })
        .collect();
    vec![
        Box::new(LinearField { m: Mat::from_rows(&rows).expect("square rows"), b: vec![0.3; d] }),
        Box::new(CoordinateQuadratic { d, i: 1.min(d - 1) }),
        Box::new(InverseNormField { d }),
        Box::new(SumProjection { d }),
    ]
}

fn residual_row(
    t: &mut Table,
    model: &str,
    construction: &str,
    field: &str,
    result: steinshrink::Result<RiskReport>,
    n: u64,
    seed: u64,
) -> Result<(), CliError> {
    let row = match result {
        Ok(r) => {
            let pass = r.mean == 0.0 || r.mean.abs() < 3.0 * r.stderr;
            vec![fmt_num(r.mean), fmt_num(r.stderr), r.n.to_string(), r.seed.to_string(), pass.to_string()]
        }
        Err(e) if e.to_string().contains(INVALID) => {
            vec!["NA".into(), "NA".into(), n.to_string(), seed.to_string(), INVALID.into()]
        }
        Err(steinshrink::Error::NumericalGuard(m)) => return Err(CliError::Guard(m)),
        Err(_) => vec!["NA".into(), "NA".into(), n.to_string(), seed.to_string(), "unavailable".into()],
    };
    let mut full = vec![model.to_string(), construction.to_string(), field.to_string()];
    full.extend(row);
    t.push(full);
    Ok(())
}

/// Columns `model, construction, test_function, mean, stderr, n, seed, pass`.
///
/// `pass` is `true` when `|mean| < 3·stderr`, `invalid-by-validity-check`
/// when the law does not meet the conditions of the identity, and
/// `unavailable` when the construction cannot be built. `--model all`
/// runs every family.
pub fn cmd_identity_check(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let mut t = Table::new(&["model", "construction", "test_function", "mean", "stderr", "n", "seed", "pass"]);
    let names: Vec<String> = if cfg.models.iter().any(|m| m == "all") {
        MODEL_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        cfg.models.clone()
    };
    let mut seed = cfg.seed;
    for name in &names {
        let model = models::model(name, cfg.d, cfg)?;
        let fields = test_fields(model.d());
        let label = model.name();
        match kernel_for(&model) {
            Ok(kernel) => {
                for f in &fields {
                    let r = stein_identity_residual(&model, &kernel, f.as_ref(), cfg.reps, seed);
                    residual_row(&mut t, &label, "stein-kernel", &f.name(), r, cfg.reps, seed)?;
                    seed = seed.wrapping_add(1);
                }
            }
            Err(e) => residual_row(&mut t, &label, "stein-kernel", "all", Err(e), cfg.reps, seed)?,
        }
        match coupling_for(&model) {
            Ok(c) => {
                let construction = format!("zero-bias {}", c.construction());
                for f in &fields {
                    let r = zb_identity_residual(&model, &c, f.as_ref(), cfg.reps, seed);
                    residual_row(&mut t, &label, &construction, &f.name(), r, cfg.reps, seed)?;
                    seed = seed.wrapping_add(1);
                }
            }
            Err(e) => residual_row(&mut t, &label, "zero-bias", "all", Err(e), cfg.reps, seed)?,
        }
    }
    Ok(t)
}

/// Columns `model, estimator, lambda, sure_mean, risk_mean, bias, bias_bound`.
///
/// With an explicit `--lambda` each value gets one row; `bias_bound` is
/// `2B*` for the shrinkage estimator. A soft threshold without `--lambda`
/// is calibrated over `--lambda-grid`: the `sure-selected` row reports the
/// mean selected threshold, and the `grid-oracle` row the grid point of
/// smallest risk.
pub fn cmd_sure(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let model = single_model(cfg)?;
    let d = model.d();
    let name = model.name();
    let mut t = Table::new(&["model", "estimator", "lambda", "sure_mean", "risk_mean", "bias", "bias_bound"]);
    if cfg.estimator == EstimatorKind::SoftThreshold && cfg.lambda.is_none() {
        let cal = soft_threshold_calibration(&model, &cfg.lambda_grid, cfg.reps, cfg.seed)?;
        t.push(vec![
            name.clone(),
            "soft-threshold sure-selected".into(),
            fmt_num(cal.mean_lambda_hat),
            fmt_num(cal.selected_sure.mean),
            fmt_num(cal.selected.mean),
            fmt_num(cal.selected_sure.mean - cal.selected.mean),
            "NA".into(),
        ]);
        let best = &cal.grid_risk[cal.best];
        t.push(vec![
            name,
            "soft-threshold grid-oracle".into(),
            fmt_num(cal.grid[cal.best]),
            "NA".into(),
            fmt_num(best.mean),
            "NA".into(),
            "NA".into(),
        ]);
        return Ok(t);
    }
    let coupling = if cfg.bounds && cfg.estimator == EstimatorKind::JamesStein { optional(coupling_for(&model))? } else { None };
    for lambda in lambdas(cfg, mean_variance(&model)? * (d as f64 - 2.0).max(0.0)) {
        let est = estimator(cfg.estimator, d, lambda)?;
        let (s, r, b) = sure_bias_full(&model, &est, cfg.reps, cfg.seed)?;
        let bound = match &coupling {
            Some(c) => optional(bound_b_star(&model, c, lambda, cfg.reps, cfg.seed.wrapping_add(1)))?.map(|b| 2.0 * b.mean),
            None => None,
        };
        t.push(vec![
            name.clone(),
            est.name(),
            fmt_num(lambda),
            fmt_num(s.mean),
            fmt_num(r.mean),
            fmt_num(b.mean),
            fmt_opt(bound),
        ]);
    }
    Ok(t)
}

fn theta_norm(cfg: &ExperimentConfig) -> Result<f64, CliError> {
    match &cfg.theta {
        ThetaSpec::Zero => Ok(0.0),
        ThetaSpec::Scaled(c) => Ok(c.abs()),
        ThetaSpec::Explicit(_) => Err(CliError::Usage("adaptivity needs --theta zero or scaled:c".into())),
    }
}

/// Columns `d, risk_mean, stderr, pinsker_limit, thm45_bound`.
///
/// Each coordinate has variance `σ²/d`, `‖θ‖ = c` from `--theta scaled:c`,
/// and `λ = (d−2)σ²/d`.
pub fn cmd_adaptivity(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let [name] = cfg.models.as_slice() else {
        return Err(CliError::Usage("adaptivity takes exactly one --model".into()));
    };
    let c = theta_norm(cfg)?;
    let s2 = cfg.sigma2();
    let limit = pinsker_limit(s2, c * c)?;
    let mut t = Table::new(&["d", "risk_mean", "stderr", "pinsker_limit", "thm45_bound"]);
    let dims = if cfg.dims.is_empty() { vec![cfg.d] } else { cfg.dims.clone() };
    for d in dims {
        if d < 3 {
            return Err(CliError::Usage("adaptivity needs d >= 3".into()));
        }
        let model = models::base_model(name, d, cfg)?
            .with_scaling(Scaling::Pinsker)
            .with_theta(ThetaSpec::Scaled(c).resolve(d)?)?;
        let lambda = (d as f64 - 2.0) * s2 / d as f64;
        let r = mc_risk(&model, &EstimatorSpec::james_stein(d, lambda)?, cfg.reps, cfg.seed)?;
        let b = if is_gaussian(&model) {
            Some(0.0)
        } else if cfg.bounds {
            let e4 = optional(e_inv_moment(&model, 2, cfg.reps, cfg.seed.wrapping_add(2)))?;
            let disc = match optional(kernel_for(&model))? {
                Some(k) => optional(discrepancy_stats(&model, &k, cfg.reps, cfg.seed.wrapping_add(3)))?,
                None => None,
            };
            match (e4, disc) {
                (Some(e4), Some(disc)) => {
                    let mut inputs = BoundInputs::from_model(&model, lambda)?;
                    inputs.e_d2_inv4 = Some(Tagged::estimate(e4.mean));
                    inputs.discrepancy = Some(disc);
                    optional(b_lambda(&inputs))?
                }
                _ => None,
            }
        } else {
            None
        };
        t.push(vec![
            d.to_string(),
            fmt_num(r.mean),
            fmt_num(r.stderr),
            fmt_num(limit),
            fmt_opt(b.map(|b| adaptivity_bound_kernel(c * c, s2, d, b))),
        ]);
    }
    Ok(t)
}

/// Columns `d, gain_term, two_b_star_closed, improves`.
///
/// Uniform noise on the sphere of radius `σ√d`, signal with
/// `cσ²d ≤ ‖θ‖² ≤ Cσ²d` and `λ = σ²(d−2)`; `--lambda 0` turns shrinkage off.
/// The crossing dimension goes to the metadata header.
pub fn cmd_sphere_demo(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let s2 = cfg.sigma2();
    let crossing = sphere_crossing(cfg.c, cfg.big_c)?;
    let off = match cfg.lambda.as_deref() {
        None => false,
        Some([l]) if *l == 0.0 => true,
        Some(_) => return Err(CliError::Usage("sphere-demo takes --lambda auto or 0".into())),
    };
    let mut t = Table::new(&["d", "gain_term", "two_b_star_closed", "improves"]);
    t.meta.push(format!("crossing_dimension: {}", fmt_num(crossing)));
    let dims = if cfg.dims.is_empty() { vec![cfg.d] } else { cfg.dims.clone() };
    for d in dims {
        if d < 3 {
            return Err(CliError::Usage("sphere-demo needs d >= 3".into()));
        }
        let (gain, rem) = if off { (0.0, 0.0) } else { (sphere_gain(d, s2, cfg.big_c), sphere_two_b_star(d, s2, cfg.c)?) };
        t.push(vec![d.to_string(), fmt_num(gain), fmt_num(rem), (gain > rem).to_string()]);
    }
    Ok(t)
}

/// One row per λ for Student noise with dispersion `σ²k/(k−2)`, the scale at
/// which the closed-form constants are stated.
pub fn cmd_student_demo(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let (d, k) = (cfg.d, cfg.k);
    let scale2 = cfg.sigma2() * k / (k - 2.0);
    let model = NoiseModel::student_with_dispersion(d, k, scale2)?.with_theta(cfg.theta.resolve(d)?)?;
    let theta_norm2: f64 = model.theta().iter().map(|v| v * v).sum();
    let coupling = couple_student(k, d, scale2)?;
    let disc = discrepancy_stats(&model, &kernel_for(&model)?, cfg.reps, cfg.seed.wrapping_add(1))?;
    let mut t = Table::new(&[
        "d",
        "k",
        "lambda",
        "theta_norm2",
        "b_star_mean",
        "b_star_stderr",
        "b_star_bound",
        "var_trace_t",
        "var_trace_t_stderr",
        "var_trace_t_closed",
        "e_frob",
        "e_frob_stderr",
        "e_frob_closed",
        "excess_mean",
        "excess_stderr",
        "kernel_excess_bound",
        "zero_bias_excess_bound",
    ]);
    for lambda in lambdas(cfg, cfg.sigma2() * (d as f64 - 2.0)) {
        let b = bound_b_star(&model, &coupling, lambda, cfg.reps, cfg.seed)?;
        let ex = mc_excess_risk(&model, lambda, cfg.reps, cfg.seed.wrapping_add(2))?;
        let closed = student_constants(d, k, lambda).ok();
        t.push(vec![
            d.to_string(),
            fmt_num(k),
            fmt_num(lambda),
            fmt_num(theta_norm2),
            fmt_num(b.mean),
            fmt_num(b.stderr),
            fmt_num(student_b_star_bound(d, k, lambda, theta_norm2 == 0.0)),
            fmt_num(disc.var_trace_t),
            fmt_num(disc.var_trace_t_se),
            fmt_opt(closed.map(|c| c.var_trace_t)),
            fmt_num(disc.e_frob_t_minus_sigma_sq),
            fmt_num(disc.e_frob_t_minus_sigma_sq_se),
            fmt_opt(closed.map(|c| c.e_frob_t_minus_sigma_sq)),
            fmt_num(ex.mean),
            fmt_num(ex.stderr),
            fmt_opt(closed.map(|c| c.kernel_excess_bound)),
            fmt_opt(closed.map(|c| c.zero_bias_excess_bound)),
        ]);
    }
    Ok(t)
}
