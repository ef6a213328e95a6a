//! EM and ARD on the same desk-scale instances, against the genie MMSE
//! estimator and the MCRB on x.

use crb_sbl::bounds::{mcrb_x_student_t, Target};
use crb_sbl::estimators::{ard_sbl, em_sbl, mmse_oracle, ArdOptions, EmOptions};
use crb_sbl::model::{
    sample_measurement_matrix, snr_to_noise_variance, synthesize, NoiseModel, SignalPrior, StudentTPrior,
};

fn sq(a: &ndarray::Array2<f64>, b: &ndarray::Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

fn main() -> crb_sbl::Result<()> {
    let (n, l, trials) = (96, 128, 10);
    let prior = StudentTPrior::from_second_moment(2.01, 1e-3)?;
    let phi = sample_measurement_matrix(n, l, 11)?;
    println!("{:>5} {:>12} {:>12} {:>12} {:>12}", "SNR", "EM", "ARD", "MMSE genie", "MCRB x");
    for snr in [10.0, 20.0, 30.0] {
        let xi = snr_to_noise_variance(snr, l, 1e-3)?;
        let (mut em, mut ard, mut genie) = (0.0, 0.0, 0.0);
        for t in 0..trials {
            let inst = synthesize(&phi, &SignalPrior::StudentT(prior), &NoiseModel::KnownVariance { xi }, 1, 100 + t)?;
            let y = &inst.observations;
            em += sq(&em_sbl(y, &phi, &EmOptions::known_noise(xi))?.x_hat, &inst.x_true);
            ard += sq(&ard_sbl(y, &phi, xi, &ArdOptions { tol: 1e-4, ..ArdOptions::default() })?.x_hat, &inst.x_true);
            genie += sq(&mmse_oracle(y, &phi, &inst.gamma_array().unwrap(), xi)?, &inst.x_true);
        }
        let k = trials as f64;
        let bound = mcrb_x_student_t(&phi, xi, prior.nu, prior.lambda)?.bound_trace(Target::X).unwrap();
        println!("{:>5} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}", snr, em / k, ard / k, genie / k, bound);
    }
    Ok(())
}
