//! Estimator invariants on random instances.

use ndarray::{Array1, Array2, Axis};
use ndarray_linalg::Solve;
use proptest::prelude::*;

use crb_sbl::estimators::{
    ard_sbl, em_sbl, mmse_oracle, weighted_l1_objective, weighted_l1_solve, ArdOptions, EmOptions, LassoOptions,
};
use crb_sbl::model::{sample_measurement_matrix, synthesize, IgDistribution, NoiseModel, SignalPrior, StudentTPrior};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn em_objective_never_decreases(n in 4usize..30, l in 2usize..40, m in 1usize..4, seed in any::<u64>(),
                                    nu in 2.01f64..4.0, log_xi in -4.0f64..-1.0, variant in 0u8..4) {
        let phi = sample_measurement_matrix(n, l, seed).unwrap();
        let prior = StudentTPrior::from_second_moment(nu, 1e-2).unwrap();
        let xi = 10f64.powf(log_xi);
        let inst = synthesize(&phi, &SignalPrior::StudentT(prior), &NoiseModel::KnownVariance { xi }, m, seed ^ 1).unwrap();
        let opts = match variant {
            0 => EmOptions::known_noise(xi),
            1 => EmOptions { hyperprior: Some(prior), ..EmOptions::known_noise(xi) },
            2 => EmOptions { estimate_noise: true, ..EmOptions::default() },
            _ => EmOptions {
                estimate_noise: true,
                hyperprior: Some(prior),
                noise_prior: Some(IgDistribution::new(3.0, 2.0 * xi).unwrap()),
                ..EmOptions::default()
            },
        };
        let r = em_sbl(&inst.observations, &phi, &opts).unwrap();
        prop_assert_eq!(r.objective_trace.len(), r.iterations + 1);
        for w in r.objective_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
        prop_assert!(r.gamma_hat.iter().all(|g| g.is_finite() && *g >= 0.0));
        prop_assert_eq!(r.x_hat.dim(), (l, m));
    }

    #[test]
    fn genie_estimate_is_the_posterior_mean(n in 2usize..20, l in 2usize..20, seed in any::<u64>()) {
        let phi = sample_measurement_matrix(n, l, seed).unwrap();
        let prior = StudentTPrior::from_second_moment(3.0, 1.0).unwrap();
        let xi = 0.1;
        let inst = synthesize(&phi, &SignalPrior::StudentT(prior), &NoiseModel::KnownVariance { xi }, 1, seed ^ 7).unwrap();
        let gamma = inst.gamma_array().unwrap();
        let x = mmse_oracle(&inst.observations, &phi, &gamma, xi).unwrap();
        let a = phi.entries();
        let mut precision = a.t().dot(a) / xi;
        for i in 0..l {
            precision[[i, i]] += 1.0 / gamma[i];
        }
        let rhs = a.t().dot(&inst.observations.column(0)) / xi;
        let expected = precision.solve(&rhs).unwrap();
        let scale = expected.iter().fold(0.0_f64, |s, v| s.max(v.abs())).max(1e-12);
        for (u, v) in x.index_axis(Axis(1), 0).iter().zip(expected.iter()) {
            prop_assert!((u - v).abs() <= 1e-7 * scale, "{} vs {}", u, v);
        }
    }

    #[test]
    fn weighted_lasso_satisfies_optimality(n in 3usize..15, l in 2usize..20, seed in any::<u64>(),
                                           w in proptest::collection::vec(0.0f64..2.0, 20),
                                           yv in proptest::collection::vec(-3.0f64..3.0, 15)) {
        let phi = sample_measurement_matrix(n, l, seed).unwrap();
        let y: Array1<f64> = yv[..n].iter().copied().collect();
        let weights: Array1<f64> = w[..l].iter().copied().collect();
        let scale = 0.5;
        let opts = LassoOptions { tol: 1e-10, max_iter: 20_000 };
        let x = weighted_l1_solve(&phi, &y, &weights, scale, &opts).unwrap();
        let f = weighted_l1_objective(&phi, &y, &weights, scale, &x);
        prop_assert!(f <= weighted_l1_objective(&phi, &y, &weights, scale, &Array1::zeros(l)) + 1e-12);
        let r = &y - &phi.entries().dot(&x);
        let corr = phi.entries().t().dot(&r) / scale;
        let tol = 1e-4 * (1.0 + corr.iter().fold(0.0_f64, |a, v| a.max(v.abs())));
        for i in 0..l {
            if x[i] != 0.0 {
                prop_assert!((corr[i] - weights[i] * x[i].signum()).abs() <= tol, "active {}: {} vs {}", i, corr[i], weights[i]);
            } else {
                prop_assert!(corr[i].abs() <= weights[i] + tol, "inactive {}: {} > {}", i, corr[i], weights[i]);
            }
        }
    }

    #[test]
    fn ard_returns_finite_sparse_estimates(n in 6usize..24, l in 4usize..32, seed in any::<u64>()) {
        let phi = sample_measurement_matrix(n, l, seed).unwrap();
        let prior = StudentTPrior::from_second_moment(2.05, 1e-2).unwrap();
        let xi = 1e-4;
        let inst = synthesize(&phi, &SignalPrior::StudentT(prior), &NoiseModel::KnownVariance { xi }, 1, seed ^ 3).unwrap();
        let r = ard_sbl(&inst.observations, &phi, xi, &ArdOptions::default()).unwrap();
        prop_assert!(r.x_hat.iter().all(|v| v.is_finite()));
        prop_assert!(r.gamma_hat.iter().all(|g| g.is_finite() && *g >= 0.0));
        for (g, x) in r.gamma_hat.iter().zip(r.x_hat.iter()) {
            if *g == 0.0 {
                prop_assert_eq!(*x, 0.0);
            }
        }
    }
}

#[test]
fn estimators_reject_mismatched_data() {
    let phi = sample_measurement_matrix(5, 3, 1).unwrap();
    let y = Array2::ones((4, 1));
    assert!(em_sbl(&y, &phi, &EmOptions::known_noise(1.0)).is_err());
    assert!(ard_sbl(&y, &phi, 1.0, &ArdOptions::default()).is_err());
    assert!(mmse_oracle(&y, &phi, &Array1::ones(3), 1.0).is_err());
}

#[test]
fn em_recovers_a_sparse_vector_at_high_snr() {
    let phi = sample_measurement_matrix(40, 60, 5).unwrap();
    let mut x = Array2::zeros((60, 1));
    x[[3, 0]] = 2.0;
    x[[17, 0]] = -1.5;
    x[[44, 0]] = 1.0;
    let y = phi.entries().dot(&x);
    let r = em_sbl(&y, &phi, &EmOptions::known_noise(1e-8)).unwrap();
    let err: f64 = r.x_hat.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    assert!(err < 1e-4, "squared error {err}");
}
