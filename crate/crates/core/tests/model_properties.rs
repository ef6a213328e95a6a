//! Sampling and model helpers.

use proptest::prelude::*;

use crb_sbl::model::{
    compressibility_profile, sample_gcp_vector, sample_hyperparameters, sample_measurement_matrix,
    snr_to_noise_variance, synthesize, top_mass_fraction, GcpPrior, IgDistribution, NoiseModel, SignalPrior,
    StudentTPrior,
};
use crb_sbl::rng::{derive_seed, rng_from_seed};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn measurement_matrix_is_plus_minus_one(n in 1usize..30, l in 1usize..30, seed in any::<u64>()) {
        let phi = sample_measurement_matrix(n, l, seed).unwrap();
        prop_assert!(phi.entries().iter().all(|v| *v == 1.0 || *v == -1.0));
        prop_assert!(phi.is_bernoulli());
        prop_assert_eq!(phi, sample_measurement_matrix(n, l, seed).unwrap());
    }

    #[test]
    fn profile_is_sorted_and_mass_fraction_monotone(x in proptest::collection::vec(-100.0f64..100.0, 1..200)) {
        let p = compressibility_profile(&x);
        prop_assert!(p.windows(2).all(|w| w[0] >= w[1]));
        let fractions = [0.01, 0.1, 0.3, 0.7, 1.0];
        let mass: Vec<f64> = fractions.iter().map(|f| top_mass_fraction(&x, *f)).collect();
        prop_assert!(mass.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        prop_assert!(mass.iter().all(|m| (0.0..=1.0 + 1e-12).contains(m)));
    }

    #[test]
    fn snr_conversion_round_trips(snr in -20.0f64..60.0, l in 1usize..4096, m2 in 1e-6f64..10.0) {
        let xi = snr_to_noise_variance(snr, l, m2).unwrap();
        let back = 10.0 * (l as f64 * m2 / xi).log10();
        prop_assert!((back - snr).abs() < 1e-9);
    }

    #[test]
    fn student_t_second_moment_round_trips(nu in 2.01f64..50.0, m2 in 1e-6f64..10.0) {
        let p = StudentTPrior::from_second_moment(nu, m2).unwrap();
        prop_assert!((p.second_moment().unwrap() - m2).abs() <= 1e-12 * m2);
    }

    #[test]
    fn synthesis_is_reproducible(seed in any::<u64>(), m in 1usize..3) {
        let phi = sample_measurement_matrix(6, 9, 1).unwrap();
        let prior = SignalPrior::StudentT(StudentTPrior::new(3.0, 2.0).unwrap());
        let noise = NoiseModel::KnownVariance { xi: 0.1 };
        let a = synthesize(&phi, &prior, &noise, m, seed).unwrap();
        let b = synthesize(&phi, &prior, &noise, m, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.x_true.dim(), (9, m));
        prop_assert_eq!(a.observations.dim(), (6, m));
    }

    #[test]
    fn derived_seeds_differ_by_path(seed in any::<u64>(), a in 0u64..1000, b in 0u64..1000) {
        prop_assume!(a != b);
        prop_assert_ne!(derive_seed(seed, &[a]), derive_seed(seed, &[b]));
        prop_assert_ne!(derive_seed(seed, &[a, b]), derive_seed(seed, &[b, a]));
    }
}

#[test]
fn inverse_gamma_sample_mean() {
    let ig = IgDistribution::new(4.0, 3.0).unwrap();
    let mut rng = rng_from_seed(1);
    let n = 200_000;
    let mean = (0..n).map(|_| ig.sample(&mut rng)).sum::<f64>() / n as f64;
    assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    assert!((ig.inverse_moment(1) - 4.0 / 3.0).abs() < 1e-12);
}

#[test]
fn hyperparameter_draws_match_the_reciprocal_moment() {
    let prior = StudentTPrior::new(4.0, 2.0).unwrap();
    let g = sample_hyperparameters(&prior, 200_000, 3).unwrap();
    let inv_mean = g.iter().map(|v| 1.0 / v).sum::<f64>() / g.len() as f64;
    assert!((inv_mean - 2.0).abs() < 0.02, "E[1/gamma] = {inv_mean}");
}

#[test]
fn gcp_draws_have_the_prior_second_moment() {
    let prior = GcpPrior::new(1.0, 6.0, 2.0).unwrap();
    let x = sample_gcp_vector(&prior, 400_000, 8).unwrap();
    let m2 = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let expected = prior.second_moment().unwrap();
    assert!((m2 - expected).abs() < 0.05 * expected, "{m2} vs {expected}");
}

#[test]
fn gcp_density_integrates_to_one() {
    let prior = GcpPrior::new(1.5, 2.5, 0.7).unwrap();
    let total = crb_sbl::quadrature::integrate_real_line(|x| prior.ln_pdf(x).exp(), Default::default()).unwrap();
    assert!((total.value - 1.0).abs() < 1e-8, "{}", total.value);
}

#[test]
fn random_noise_draws_vary_across_seeds() {
    let phi = sample_measurement_matrix(4, 4, 1).unwrap();
    let prior = SignalPrior::StudentT(StudentTPrior::new(3.0, 2.0).unwrap());
    let noise = NoiseModel::RandomIg { ig: IgDistribution::new(5.0, 0.4).unwrap() };
    let a = synthesize(&phi, &prior, &noise, 1, 1).unwrap();
    let b = synthesize(&phi, &prior, &noise, 1, 2).unwrap();
    assert_ne!(a.xi_true, b.xi_true);
    assert!(a.xi_true > 0.0);
}
