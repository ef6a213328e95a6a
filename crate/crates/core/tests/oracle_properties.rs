//! Oracle routes: analytic scores against finite differences, quadrature
//! examples and the zero-mean score check.

use ndarray::{array, Array1, Array2};
use proptest::prelude::*;

use crb_sbl::estimators::marginal_log_likelihood;
use crb_sbl::model::{sample_measurement_matrix, MeasurementEnsemble, StudentTPrior};
use crb_sbl::oracle::{
    fd_hessian_logprior, mc_fim_gamma, mc_marginal_fim, quad_expectation_ig, regularity_check, regularity_check_misspecified,
    score_gamma_xi, IgIntegrand,
};

fn loglik(y: &Array1<f64>, phi: &MeasurementEnsemble, gamma: &Array1<f64>, xi: f64) -> f64 {
    let y2 = y.clone().insert_axis(ndarray::Axis(1));
    marginal_log_likelihood(&y2, phi, gamma, xi).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn score_matches_central_differences(n in 2usize..9, l in 1usize..7, seed in any::<u64>(),
                                         g in proptest::collection::vec(-1.0f64..1.0, 6),
                                         yv in proptest::collection::vec(-2.0f64..2.0, 8),
                                         log_xi in -1.0f64..0.5) {
        let phi = sample_measurement_matrix(n, l, seed).unwrap();
        let gamma: Array1<f64> = g[..l].iter().map(|v| 10f64.powf(*v)).collect();
        let y: Array1<f64> = yv[..n].iter().copied().collect();
        let xi = 10f64.powf(log_xi);
        let s = score_gamma_xi(&y, &phi, &gamma, xi).unwrap();
        prop_assert_eq!(s.len(), l + 1);
        let scale = s.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-3);
        for j in 0..=l {
            let (mut gp, mut gm) = (gamma.clone(), gamma.clone());
            let (mut xp, mut xm) = (xi, xi);
            let base = if j < l { gamma[j] } else { xi };
            let h = 1e-5 * base;
            if j < l { gp[j] += h; gm[j] -= h; } else { xp += h; xm -= h; }
            let fd = (loglik(&y, &phi, &gp, xp) - loglik(&y, &phi, &gm, xm)) / (2.0 * h);
            prop_assert!((fd - s[j]).abs() <= 1e-6 * scale.max(s[j].abs()) + 1e-6 * fd.abs(),
                "component {}: analytic {} vs fd {}", j, s[j], fd);
        }
    }

    #[test]
    fn ig_reciprocal_moment_is_lambda(nu in 0.5f64..20.0, lambda in 0.01f64..100.0) {
        let r = quad_expectation_ig(nu / 2.0, nu / (2.0 * lambda), IgIntegrand::Reciprocal).unwrap();
        prop_assert!(r.pass, "{:?}", r);
        prop_assert!((r.estimate.as_scalar().unwrap() - lambda).abs() <= 1e-6 * lambda);
    }

    #[test]
    fn student_t_second_derivative(x in -5.0f64..5.0, nu in 1.0f64..10.0, lambda in 0.2f64..5.0) {
        let p = StudentTPrior::new(nu, lambda).unwrap();
        let fd = fd_hessian_logprior(|t| p.ln_pdf(t), x, None).unwrap();
        let u = lambda * x * x;
        let exact = -(nu + 1.0) * lambda * (nu - u) / (nu + u).powi(2);
        prop_assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1e-3), "{} vs {}", fd, exact);
    }
}

#[test]
fn scalar_score_example() {
    let phi = MeasurementEnsemble::new(array![[1.0]]).unwrap();
    let s = score_gamma_xi(&array![2.0], &phi, &array![1.0], 1.0).unwrap();
    assert!((s[0] - 0.25).abs() < 1e-14);
    assert!((s[1] - 0.25).abs() < 1e-14);
}

#[test]
fn zero_matrix_has_zero_gamma_score() {
    let phi = MeasurementEnsemble::new(Array2::zeros((3, 2))).unwrap();
    let s = score_gamma_xi(&array![0.3, -1.0, 2.0], &phi, &array![1.0, 4.0], 0.5).unwrap();
    assert_eq!(s[0], 0.0);
    assert_eq!(s[1], 0.0);
    let r = regularity_check(&phi, &array![1.0, 4.0], 0.5, 2_000, 3).unwrap();
    assert!(r.pass);
}

#[test]
fn quadrature_examples() {
    let cases = [
        (1.0, 1.0, IgIntegrand::Reciprocal, 1.0),
        (1.0, 1.0, IgIntegrand::BcrbGammaKernel { m: 1 }, 9.0),
        (3.0, 0.2, IgIntegrand::BcrbXiKernel { n_obs: 100 }, 16_800.0),
    ];
    for (shape, rate, integrand, expected) in cases {
        let r = quad_expectation_ig(shape, rate, integrand).unwrap();
        let v = r.estimate.as_scalar().unwrap();
        assert!((v - expected).abs() <= 1e-8 * expected, "{integrand:?}: {v}");
    }
}

#[test]
fn gaussian_second_derivative() {
    for x in [-3.0, 0.0, 0.7, 12.0] {
        let v = fd_hessian_logprior(|t| -0.5 * t * t / 2.5, x, None).unwrap();
        assert!((v + 1.0 / 2.5).abs() < 1e-6);
    }
}

#[test]
fn kink_points_are_rejected() {
    assert!(fd_hessian_logprior(|t: f64| -t.abs(), 0.0, Some(0.0)).is_err());
}

#[test]
fn misspecified_covariance_fails_regularity() {
    let phi = sample_measurement_matrix(6, 3, 9).unwrap();
    let gamma = array![1.0, 0.5, 2.0];
    let wrong = &gamma * 1.1;
    let r = regularity_check_misspecified(&phi, &gamma, &wrong, 0.2, 100_000, 4).unwrap();
    assert!(!r.pass, "{r:?}");
    assert!(regularity_check(&phi, &gamma, 0.2, 100_000, 4).unwrap().pass);
}

#[test]
fn monte_carlo_error_shrinks_with_samples() {
    let phi = sample_measurement_matrix(4, 2, 1).unwrap();
    let gamma = array![0.8, 1.6];
    let small = mc_fim_gamma(&phi, &gamma, 0.3, 25_000, 5).unwrap();
    let large = mc_fim_gamma(&phi, &gamma, 0.3, 100_000, 5).unwrap();
    let ratio = large.std_error.unwrap() / small.std_error.unwrap();
    assert!((ratio - 0.5).abs() < 0.1, "ratio {ratio}");
}

#[test]
fn orthogonal_columns_have_vanishing_off_diagonal_information() {
    let phi = MeasurementEnsemble::new(array![[1.0, 1.0], [1.0, -1.0], [1.0, 1.0], [1.0, -1.0]]).unwrap();
    let est = mc_marginal_fim(&phi, &array![0.5, 2.0], 0.4, 1, 100_000, 6).unwrap();
    for (i, j) in [(0, 1), (1, 0)] {
        assert!(est.mean[[i, j]].abs() <= 3.0 * est.std_error[[i, j]], "{:?}", est);
    }
}
