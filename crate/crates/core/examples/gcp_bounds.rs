//! Fisher term of the generalized compressible prior across τ, checked
//! against quadrature, and the resulting MCRB on x.

use crb_sbl::bounds::{gcp_fisher_term, mcrb_x_gcp, Target};
use crb_sbl::model::{sample_measurement_matrix, GcpPrior};
use crb_sbl::oracle::quad_gcp_fisher_term;

fn main() -> crb_sbl::Result<()> {
    let phi = sample_measurement_matrix(48, 64, 3)?;
    let xi = 1e-2;
    println!("{:>5} {:>14} {:>14} {:>10} {:>14}", "tau", "closed form", "quadrature", "rel err", "MCRB x trace");
    for tau in [0.75, 1.0, 1.5, 2.0, 3.0] {
        let prior = GcpPrior::new(tau, 3.0, 1.0)?;
        let closed = gcp_fisher_term(&prior)?;
        let quad = quad_gcp_fisher_term(&prior)?;
        let bound = mcrb_x_gcp(&phi, xi, &prior)?;
        println!(
            "{:>5} {:>14.10} {:>14.10} {:>10.2e} {:>14.6e}",
            tau,
            closed,
            quad.estimate.as_scalar().unwrap_or(f64::NAN),
            quad.rel_error,
            bound.bound_trace(Target::X).unwrap()
        );
    }
    let t2 = GcpPrior::new(2.0, 3.0, 1.0)?;
    println!("tau = 2 reduces to lambda(nu+1)/(nu+3) = {:.10}", gcp_fisher_term(&t2)?);
    Ok(())
}
