//! Bounds when the noise variance is also unknown, either as a
//! deterministic parameter or with an inverse-gamma prior.

use crb_sbl::bounds::{bcrb_unknown_noise, hcrb_unknown_noise, mcrb_gamma_xi, GammaModel, Target};
use crb_sbl::model::{sample_hyperparameters, sample_measurement_matrix, StudentTPrior};

fn main() -> crb_sbl::Result<()> {
    let xi = 1e-3;
    println!("HCRB on xi is 2 xi^2 / N:");
    for n in [1500usize, 1600, 1700, 1800] {
        let phi = sample_measurement_matrix(n, 4, 1)?;
        let gamma = ndarray::Array1::from_elem(4, 1.0);
        let h = hcrb_unknown_noise(&phi, xi, &GammaModel::Deterministic(gamma))?;
        println!("  N = {n}: {:.4e}", h.bound_trace(Target::Xi).unwrap());
    }

    let (n, l) = (64, 96);
    let prior = StudentTPrior::from_second_moment(2.05, 1e-3)?;
    let phi = sample_measurement_matrix(n, l, 2)?;
    let gamma = sample_hyperparameters(&prior, l, 3)?;
    let c = 5.0;
    let d = (c - 1.0) * xi;
    let h = hcrb_unknown_noise(&phi, xi, &GammaModel::Deterministic(gamma.clone()))?;
    let b = bcrb_unknown_noise(&phi, &GammaModel::Random { nu: prior.nu, lambda: prior.lambda }, c, d)?;
    let m = mcrb_gamma_xi(&phi, xi, &gamma)?;
    println!("N = {n}, L = {l}, xi = {xi}, IG(c = {c}, d = {d}) noise prior");
    for (name, r) in [("HCRB", &h), ("BCRB", &b), ("MCRB", &m)] {
        let part = |t| r.bound_trace(t).map_or("-".to_string(), |v| format!("{v:.4e}"));
        println!("  {name}: x {:>12}  gamma {:>12}  xi {:>12}", part(Target::X), part(Target::Gamma), part(Target::Xi));
    }
    Ok(())
}
