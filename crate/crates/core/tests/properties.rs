use proptest::prelude::*;
use steinshrink::estimation::{soft_threshold, sure, sure_kernel, EstimatorSpec, GridSpec, SoftThresholdPath};
use steinshrink::mc::Welford;
use steinshrink::noise_models::{NoiseModel, UnivariateLaw};
use steinshrink::stein_kernels::SteinKernel;
use steinshrink::Mat;

fn vec_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, d)
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn loss_decomposes_around_the_identity(x in vec_strategy(7), theta in vec_strategy(7), lambda in 0.0f64..10.0) {
        let est = EstimatorSpec::james_stein(7, lambda).unwrap();
        prop_assume!(x.iter().map(|v| v * v).sum::<f64>() > 1e-6);
        let mut out = vec![0.0; 7];
        est.apply(&x, &mut out).unwrap();
        let g: Vec<f64> = x.iter().zip(&out).map(|(a, b)| a - b).collect();
        let cross: f64 = g.iter().zip(x.iter().zip(&theta)).map(|(gi, (xi, ti))| gi * (xi - ti)).sum();
        let expected = dist2(&x, &theta) + g.iter().map(|v| v * v).sum::<f64>() - 2.0 * cross;
        let mut buf = vec![0.0; 7];
        let loss = est.loss(&x, &theta, &mut buf).unwrap();
        prop_assert!((loss - expected).abs() < 1e-9 * (1.0 + loss.abs()));
    }

    #[test]
    fn soft_threshold_is_nonexpansive(x in vec_strategy(9), y in vec_strategy(9), lambda in 0.0f64..4.0) {
        let a = soft_threshold(&x, lambda).unwrap();
        let b = soft_threshold(&y, lambda).unwrap();
        prop_assert!(dist2(&a, &b) <= dist2(&x, &y) + 1e-12);
    }

    #[test]
    fn constant_kernel_sure_matches_gaussian_sure(x in vec_strategy(6), theta in vec_strategy(6), lambda in 0.1f64..3.0, s2 in 0.2f64..4.0) {
        let sigma = Mat::scalar(6, s2);
        for est in [EstimatorSpec::james_stein(6, lambda).unwrap(), EstimatorSpec::soft_threshold(6, lambda).unwrap()] {
            let a = sure(&x, &est, &sigma).unwrap();
            let b = sure_kernel(&x, &theta, &est, &SteinKernel::Constant(sigma.clone())).unwrap();
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn soft_threshold_path_matches_direct_evaluation(x in vec_strategy(12), theta in vec_strategy(12), lambda in 0.0f64..6.0) {
        let path = SoftThresholdPath::new(&x, Some(&theta));
        let est = EstimatorSpec::soft_threshold(12, lambda).unwrap();
        let direct = sure(&x, &est, &Mat::identity(12)).unwrap();
        prop_assert!((path.sure(1.0, lambda) - direct).abs() < 1e-9 * (1.0 + direct.abs()));
        let mut buf = vec![0.0; 12];
        let loss = est.loss(&x, &theta, &mut buf).unwrap();
        prop_assert!((path.loss(lambda) - loss).abs() < 1e-9 * (1.0 + loss.abs()));
    }

    #[test]
    fn grid_is_increasing_and_starts_at_zero(c in 0.5f64..4.0, size in 2usize..300, d in 2usize..5000) {
        let pts = GridSpec::new(c, size).unwrap().points(d);
        prop_assert_eq!(pts.len(), size);
        prop_assert_eq!(pts[0], 0.0);
        prop_assert!(pts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn linear_transform_density_round_trips(y in vec_strategy(3), off in prop::collection::vec(-0.9f64..0.9, 3)) {
        let a = Mat::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![off[0], 1.5, 0.0],
            vec![off[1], off[2], 0.8],
        ]).unwrap();
        let base = NoiseModel::product(3, UnivariateLaw::laplace_with_variance(1.0)).unwrap();
        let t = NoiseModel::linear_transform(a.clone(), base.clone()).unwrap();
        let inv = a.inverse().unwrap();
        let mut z = vec![0.0; 3];
        inv.mul_vec(&y, &mut z);
        let expected = base.log_density(&z).unwrap() - (1.5f64 * 0.8).ln();
        prop_assert!((t.log_density(&y).unwrap() - expected).abs() < 1e-9);
        let mut back = vec![0.0; 3];
        a.mul_vec(&z, &mut back);
        prop_assert!(dist2(&back, &y) < 1e-18);
    }

    #[test]
    fn welford_merge_matches_sequential(xs in prop::collection::vec(-1e3f64..1e3, 1..200), split in 0usize..200) {
        let split = split.min(xs.len());
        let mut all = Welford::default();
        xs.iter().for_each(|&x| all.push(x));
        let (mut a, mut b) = (Welford::default(), Welford::default());
        xs[..split].iter().for_each(|&x| a.push(x));
        xs[split..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        prop_assert_eq!(a.count(), all.count());
        prop_assert!((a.mean() - all.mean()).abs() < 1e-9 * (1.0 + all.mean().abs()));
        prop_assert!((a.variance() - all.variance()).abs() < 1e-7 * (1.0 + all.variance()));
    }
}
