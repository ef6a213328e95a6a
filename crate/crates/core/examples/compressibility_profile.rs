//! Draws Student-t and GCP vectors and prints how much of their magnitude
//! sits in the largest few entries, next to a Gaussian draw for contrast.

use crb_sbl::model::{
    compressibility_profile, sample_compressible_vector, sample_gcp_vector, sample_hyperparameters, top_mass_fraction,
    GcpPrior, StudentTPrior,
};
use ndarray::Array1;

fn main() -> crb_sbl::Result<()> {
    let dim = 2048;
    let student = StudentTPrior::new(2.01, 1.0)?;
    let gamma = sample_hyperparameters(&student, dim, 1)?;
    let x_t = sample_compressible_vector(&gamma, 1, 2)?.column(0).to_vec();
    let x_gdp = sample_gcp_vector(&GcpPrior::new(1.0, 2.01, 1.0)?, dim, 3)?.to_vec();
    let x_gauss = sample_compressible_vector(&Array1::ones(dim), 1, 4)?.column(0).to_vec();

    println!("{:<14} {:>10} {:>10} {:>10}", "draw", "top 1%", "top 5%", "top 10%");
    for (name, x) in [("student-t", &x_t), ("gdp (tau=1)", &x_gdp), ("gaussian", &x_gauss)] {
        println!(
            "{:<14} {:>10.3} {:>10.3} {:>10.3}",
            name,
            top_mass_fraction(x, 0.01),
            top_mass_fraction(x, 0.05),
            top_mass_fraction(x, 0.10)
        );
    }
    let profile = compressibility_profile(&x_t);
    println!("sorted student-t magnitudes at ranks 1, 10, 100, 1000:");
    for k in [1usize, 10, 100, 1000] {
        println!("  |x|_({k}) = {:.4e}", profile[k - 1]);
    }
    Ok(())
}
