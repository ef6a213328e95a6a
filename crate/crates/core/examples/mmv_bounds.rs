//! Multiple measurement vectors: every table row at M = 1, 2, 4, 8.

use crb_sbl::bounds::{mmv_bounds, MmvCase, MmvInputs};
use crb_sbl::model::{sample_hyperparameters, sample_measurement_matrix, StudentTPrior};

fn main() -> crb_sbl::Result<()> {
    let (n, l) = (24, 32);
    let prior = StudentTPrior::from_second_moment(2.5, 1.0)?;
    let phi = sample_measurement_matrix(n, l, 5)?;
    let gamma = sample_hyperparameters(&prior, l, 6)?;
    let inputs = MmvInputs {
        xi: Some(0.05),
        gamma: Some(&gamma),
        nu: Some(prior.nu),
        lambda: Some(prior.lambda),
        c: Some(4.0),
        d: Some(0.15),
        ..MmvInputs::new(&phi)
    };
    println!("{:<16} {:>12} {:>12} {:>12} {:>12}", "case", "M=1", "M=2", "M=4", "M=8");
    for case in MmvCase::ALL {
        let mut line = format!("{:<16}", format!("{case:?}"));
        for m in [1usize, 2, 4, 8] {
            match mmv_bounds(case, &inputs, m) {
                Ok(r) => line.push_str(&format!(" {:>12.4e}", r.total_bound_trace())),
                Err(_) => line.push_str(&format!(" {:>12}", "n/a")),
            }
        }
        println!("{line}");
    }
    Ok(())
}
