use steinshrink::estimation::{sure_kernel_check, sure_zero_bias_check, EstimatorSpec, GridSpec};
use steinshrink::noise_models::{NoiseModel, Scaling, ThetaSpec, UnivariateLaw};
use steinshrink::quadrature::integrate_to_inf;
use steinshrink::risk_lab::*;
use steinshrink::special::ln_gamma;
use steinshrink::stein_kernels::{discrepancy_stats, kernel_for};
use steinshrink::zero_bias::{couple_gaussian, couple_sphere, couple_student, coupling_for};
use steinshrink::RiskReport;

const N: u64 = 1_000_000;

fn inv_chi2_mean(d: usize) -> f64 {
    let k = d as f64 / 2.0;
    let ln_norm = -k * 2f64.ln() - ln_gamma(k);
    integrate_to_inf(|x| if x > 0.0 { (ln_norm + (k - 2.0) * x.ln() - x / 2.0).exp() } else { 0.0 }, 0.0, 1e-12)
        .unwrap()
        .value
}

fn within(r: &RiskReport, target: f64) {
    assert!(r.within(target, 3.0), "{}: {} ± {} vs {target}", r.label, r.mean, r.stderr);
}

#[test]
fn quadrature_oracle_for_inverse_chi_square() {
    for d in [5, 6, 9, 20] {
        assert!((inv_chi2_mean(d) - 1.0 / (d as f64 - 2.0)).abs() < 1e-10);
    }
}

#[test]
fn gaussian_shrinkage_risk() {
    let m = NoiseModel::gaussian(5, 1.0).unwrap();
    let e = inv_chi2_mean(5);
    within(&mc_risk(&m, &EstimatorSpec::james_stein(5, 3.0).unwrap(), N, 1).unwrap(), gaussian_js_risk(5, 1.0, 3.0, e));
    within(&mc_risk(&m, &EstimatorSpec::james_stein(5, 6.0).unwrap(), N, 2).unwrap(), 5.0);
    within(&mc_risk(&m, &EstimatorSpec::identity(5), N, 3).unwrap(), 5.0);
    within(&mc_excess_risk(&m, 3.0, N, 4).unwrap(), -3.0);
    assert_eq!(mc_excess_risk(&m, 0.0, 1000, 4).unwrap().mean, 0.0);
}

#[test]
fn stderr_halves_when_n_quadruples() {
    let m = NoiseModel::gaussian(20, 1.0).unwrap().with_theta(vec![1.0; 20]).unwrap();
    let est = EstimatorSpec::james_stein(20, 18.0).unwrap();
    let a = mc_risk(&m, &est, 50_000, 5).unwrap();
    let b = mc_risk(&m, &est, 200_000, 5).unwrap();
    let ratio = a.stderr / b.stderr;
    assert!((ratio / 2.0 - 1.0).abs() < 0.1, "{ratio}");
}

#[test]
fn improvement_range() {
    let d = 5;
    let m = NoiseModel::gaussian(d, 1.0).unwrap();
    for (i, lambda) in [1.0, 2.0, 3.0, 4.0, 5.0].into_iter().enumerate() {
        let r = mc_excess_risk(&m, lambda, N, 10 + i as u64).unwrap();
        assert!(r.mean < -3.0 * r.stderr, "λ = {lambda}: {} ± {}", r.mean, r.stderr);
    }
    let r = mc_excess_risk(&m, 7.0, N, 20).unwrap();
    assert!(r.mean >= -3.0 * r.stderr);
}

#[test]
fn gaussian_sure_is_unbiased() {
    let m5 = NoiseModel::gaussian(5, 1.0).unwrap();
    within(&sure_bias(&m5, &EstimatorSpec::james_stein(5, 3.0).unwrap(), N, 30).unwrap(), 0.0);
    let mut theta = vec![0.0; 16];
    theta[..3].iter_mut().for_each(|t| *t = 4.0);
    let m16 = NoiseModel::gaussian(16, 1.0).unwrap().with_theta(theta).unwrap();
    within(&sure_bias(&m16, &EstimatorSpec::soft_threshold(16, 1.2).unwrap(), N, 31).unwrap(), 0.0);
    within(&sure_bias(&m16, &EstimatorSpec::james_stein(16, 14.0).unwrap(), N, 32).unwrap(), 0.0);
}

#[test]
fn kernel_sure_is_unbiased() {
    let student = NoiseModel::student_with_dispersion(6, 6.0, 1.0).unwrap().with_theta(vec![0.5; 6]).unwrap();
    let c = sure_kernel_check(&student, &EstimatorSpec::james_stein(6, 4.0).unwrap(), &kernel_for(&student).unwrap(), N, 40)
        .unwrap();
    within(&c.gap, 0.0);
    let laplace = NoiseModel::product(8, UnivariateLaw::laplace_with_variance(1.0))
        .unwrap()
        .with_theta(vec![0.0, 0.0, 2.0, -3.0, 0.0, 0.5, 0.0, 1.0])
        .unwrap();
    let c = sure_kernel_check(&laplace, &EstimatorSpec::soft_threshold(8, 1.0).unwrap(), &kernel_for(&laplace).unwrap(), N, 41)
        .unwrap();
    within(&c.gap, 0.0);
}

#[test]
fn zero_bias_sure_is_unbiased() {
    let g = NoiseModel::gaussian(6, 1.0).unwrap().with_theta(vec![1.0; 6]).unwrap();
    let est = EstimatorSpec::james_stein(6, 4.0).unwrap();
    within(&sure_zero_bias_check(&g, &est, &couple_gaussian(&g).unwrap(), N, 50).unwrap().gap, 0.0);
    let s = NoiseModel::sphere(6, 1.0).unwrap().with_theta(vec![2.0; 6]).unwrap();
    within(&sure_zero_bias_check(&s, &est, &couple_sphere(6, 1.0).unwrap(), N, 51).unwrap().gap, 0.0);
    let t = NoiseModel::student_with_dispersion(6, 6.0, 1.0).unwrap();
    within(&sure_zero_bias_check(&t, &est, &couple_student(6.0, 6, 1.0).unwrap(), N, 52).unwrap().gap, 0.0);
}

#[test]
fn student_discrepancy_constants() {
    let m = NoiseModel::student_with_dispersion(6, 6.0, 1.5).unwrap();
    let s = discrepancy_stats(&m, &kernel_for(&m).unwrap(), N, 60).unwrap();
    let c = student_constants(6, 6.0, 4.0).unwrap();
    assert!((s.var_trace_t - c.var_trace_t).abs() < 3.0 * s.var_trace_t_se, "{s:?}");
    assert!((s.e_frob_t_minus_sigma_sq - c.e_frob_t_minus_sigma_sq).abs() < 3.0 * s.e_frob_t_minus_sigma_sq_se, "{s:?}");
    let e4 = e_inv_moment(&m, 2, N, 61).unwrap();
    within(&e4, c.e_d2_inv4_bound);
}

#[test]
fn student_b_star_values() {
    let (d, k, lambda) = (6, 6.0, 4.0);
    let m = NoiseModel::student_with_dispersion(d, k, 1.5).unwrap();
    let c = couple_student(k, d, 1.5).unwrap();
    let b = bound_b_star(&m, &c, lambda, N, 70).unwrap();
    within(&b, 2.0 * lambda / (k - 2.0));
    let shifted = m.clone().with_theta(vec![1.0; d]).unwrap();
    let b = bound_b_star(&shifted, &c, lambda, N, 71).unwrap();
    assert!(b.mean <= student_b_star_bound(d, k, lambda, false) + 3.0 * b.stderr);
    let (_, _, bias) = sure_bias_full(&shifted, &EstimatorSpec::james_stein(d, lambda).unwrap(), N, 72).unwrap();
    assert!(bias.mean.abs() <= 2.0 * b.mean + 3.0 * (bias.stderr + 2.0 * b.stderr));
}

#[test]
fn gaussian_b_star_vanishes_on_every_path() {
    let m = NoiseModel::gaussian(6, 1.0).unwrap().with_theta(vec![0.7; 6]).unwrap();
    for (i, c) in [
        couple_gaussian(&m).unwrap(),
        steinshrink::zero_bias::couple_independent(&m).unwrap(),
        steinshrink::zero_bias::couple_square_bias(&m).unwrap(),
    ]
    .iter()
    .enumerate()
    {
        let b = bound_b_star(&m, c, 4.0, 200_000, 80 + i as u64).unwrap();
        assert!(b.mean <= 3.0 * b.stderr || b.mean == 0.0, "{}: {} ± {}", c.construction(), b.mean, b.stderr);
    }
}

#[test]
fn student_excess_sandwich() {
    let (d, k) = (20, 10.0);
    let m = NoiseModel::student(d, k).unwrap();
    let sigma2 = k / (k - 2.0);
    let lambda = sigma2 * (d as f64 - 2.0);
    let ex = mc_excess_risk(&m, lambda, N, 90).unwrap();
    assert!(ex.mean < -3.0 * ex.stderr);
    let e = e_inv2(&m, N, 91).unwrap();
    let mut inputs = BoundInputs::from_model(&m, lambda).unwrap();
    inputs.e_inv2 = Some(Tagged::estimate(e.mean));
    inputs.e_d2_inv4 = Some(Tagged::estimate(e_inv_moment(&m, 2, N, 92).unwrap().mean));
    inputs.discrepancy = Some(discrepancy_stats(&m, &kernel_for(&m).unwrap(), N, 93).unwrap());
    let upper = bound_thm33(&inputs).unwrap() - inputs.trace_sigma;
    let b = b_lambda(&inputs).unwrap();
    assert!(ex.mean <= upper + 3.0 * ex.stderr);
    assert!(ex.mean >= -lambda * lambda * e.mean - 2.0 * b - 3.0 * ex.stderr);
}

#[test]
fn gaussian_bounds_are_exact() {
    let d = 5;
    let m = NoiseModel::gaussian(d, 1.0).unwrap().with_theta(vec![0.4; d]).unwrap();
    let e = e_inv2(&m, N, 100).unwrap();
    for (i, lambda) in [0.0, 3.0, 6.0].into_iter().enumerate() {
        let risk = mc_risk(&m, &EstimatorSpec::james_stein(d, lambda).unwrap(), N, 100).unwrap();
        let inputs = gaussian_inputs(&m, lambda, e.mean).unwrap();
        let exact = gaussian_js_risk(d, 1.0, lambda, e.mean);
        let b33 = bound_thm33(&inputs).unwrap();
        assert!(b33 >= exact - 1e-12, "λ = {lambda}");
        let t31 = bound_thm31(&inputs).unwrap();
        assert!((t31 - exact).abs() < 1e-12 || t31 > exact, "{i}");
        let gap = risk.mean - exact;
        assert!(gap.abs() < 3.0 * risk.stderr + 3.0 * lambda * lambda * e.stderr, "λ = {lambda}: {} vs {exact}", risk.mean);
        assert!(risk.mean - 3.0 * risk.stderr <= b33);
    }
}

#[test]
fn jensen_and_inverse_moments() {
    let m = NoiseModel::gaussian(5, 1.0).unwrap().with_theta(vec![1.0; 5]).unwrap();
    let e = e_inv2(&m, N, 110).unwrap();
    assert!(e.mean + 3.0 * e.stderr >= jensen_lower(m.theta(), 5.0).unwrap());
    for mm in [1u32, 2, 4] {
        for factor in [2.0, 4.0] {
            let d = (factor * mm as f64 / 0.5) as usize;
            let b = inverse_moment_bound(1.0, 1.0, 0.5, mm, d).unwrap();
            assert!(b.valid);
            let g = NoiseModel::gaussian(d, 1.0).unwrap();
            let r = e_inv_moment(&g, mm, 200_000, 111 + mm as u64).unwrap();
            assert!(r.mean <= b.bound + 3.0 * r.stderr, "m = {mm}, d = {d}: {} vs {}", r.mean, b.bound);
        }
    }
}

#[test]
fn laplace_shrinkage_improves() {
    let d = 64;
    let theta = ThetaSpec::Scaled((d as f64 / 2.0).sqrt()).resolve(d).unwrap();
    let m = NoiseModel::product(d, UnivariateLaw::laplace_with_variance(1.0)).unwrap().with_theta(theta).unwrap();
    let r = mc_excess_risk(&m, d as f64 - 2.0, 200_000, 120).unwrap();
    assert!(r.mean < -3.0 * r.stderr);
}

#[test]
fn pinsker_scaling_approaches_the_limit() {
    let d = 400;
    for model in [
        NoiseModel::gaussian(d, 1.0).unwrap(),
        NoiseModel::product(d, UnivariateLaw::laplace_with_variance(1.0)).unwrap(),
    ] {
        let m = model.with_scaling(Scaling::Pinsker).with_theta(ThetaSpec::Scaled(1.0).resolve(d).unwrap()).unwrap();
        let lambda = (d as f64 - 2.0) / d as f64;
        let r = mc_risk(&m, &EstimatorSpec::james_stein(d, lambda).unwrap(), 20_000, 130).unwrap();
        assert!((r.mean / 0.5 - 1.0).abs() < 0.05, "{}", r.mean);
        assert!(r.mean <= adaptivity_bound_kernel(1.0, 1.0, d, 0.0) + 3.0 * r.stderr || m.name().contains("laplace"));
    }
}

#[test]
fn sphere_demo_closed_bounds() {
    for d in [65, 100, 200] {
        assert!(sphere_gain(d, 1.0, 9.0) > sphere_two_b_star(d, 1.0, 4.0).unwrap());
    }
    assert!(sphere_gain(40, 1.0, 9.0) < sphere_two_b_star(40, 1.0, 4.0).unwrap());
    let d = 100;
    let m = NoiseModel::sphere(d, 1.0).unwrap().with_theta(ThetaSpec::Scaled((4.0 * d as f64).sqrt()).resolve(d).unwrap()).unwrap();
    let r = mc_excess_risk(&m, d as f64 - 2.0, 200_000, 140).unwrap();
    assert!(r.mean < -3.0 * r.stderr);
    let c = coupling_for(&m).unwrap();
    let b = bound_b_star(&m, &c, d as f64 - 2.0, 200_000, 141).unwrap();
    assert!(2.0 * b.mean <= sphere_two_b_star(d, 1.0, 4.0).unwrap() + 6.0 * b.stderr);
}

#[test]
fn calibration_tracks_the_grid_oracle() {
    let d = 256;
    let mut theta = vec![0.0; d];
    theta[..8].iter_mut().for_each(|t| *t = 5.0);
    let m = NoiseModel::gaussian(d, 1.0).unwrap().with_theta(theta).unwrap();
    let cal = soft_threshold_calibration(&m, &GridSpec::new(2.0, 128).unwrap(), 2000, 150).unwrap();
    let best = &cal.grid_risk[cal.best];
    assert!(cal.selected.mean <= 1.1 * best.mean + 3.0 * cal.selected.stderr);
    assert!(cal.mean_lambda_hat > 0.0);
}
