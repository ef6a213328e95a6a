//! Known-noise bounds on one random ±1 measurement matrix: hybrid, Bayesian
//! and the two marginalized bounds, with their traces per block.

use crb_sbl::bounds::{bcrb_smv, hcrb_smv, mcrb_gamma, mcrb_x_student_t, Target};
use crb_sbl::model::{sample_hyperparameters, sample_measurement_matrix, snr_to_noise_variance, StudentTPrior};

fn main() -> crb_sbl::Result<()> {
    let (n, l) = (96, 128);
    let prior = StudentTPrior::from_second_moment(2.05, 1e-3)?;
    let phi = sample_measurement_matrix(n, l, 7)?;
    let gamma = sample_hyperparameters(&prior, l, 8)?;
    println!("N = {n}, L = {l}, nu = {}, lambda = {:.4}", prior.nu, prior.lambda);
    println!("{:>6} {:>14} {:>14} {:>14} {:>14} {:>14}", "SNR", "HCRB x", "HCRB gamma", "BCRB x", "MCRB x", "MCRB gamma");
    for snr in [0.0, 10.0, 20.0, 30.0, 40.0] {
        let xi = snr_to_noise_variance(snr, l, 1e-3)?;
        let h = hcrb_smv(&phi, xi, &gamma)?;
        let b = bcrb_smv(&phi, xi, prior.nu, prior.lambda)?;
        let mx = mcrb_x_student_t(&phi, xi, prior.nu, prior.lambda)?;
        let mg = mcrb_gamma(&phi, xi, &gamma)?;
        println!(
            "{:>6} {:>14.4e} {:>14.4e} {:>14.4e} {:>14.4e} {:>14.4e}",
            snr,
            h.bound_trace(Target::X).unwrap(),
            h.bound_trace(Target::Gamma).unwrap(),
            b.bound_trace(Target::X).unwrap(),
            mx.bound_trace(Target::X).unwrap(),
            mg.bound_trace(Target::Gamma).unwrap(),
        );
    }
    Ok(())
}
