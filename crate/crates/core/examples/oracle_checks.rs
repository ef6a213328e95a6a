//! Runs the quick verification suite and prints one line per check.

use crb_sbl::harness::{verify::VERIFY_SEED, verify_suite, ShippedClosedForms, VerifyLevel};

fn main() {
    let report = verify_suite(VerifyLevel::Quick, &ShippedClosedForms, VERIFY_SEED);
    for e in &report.entries {
        println!("{:<5} {:<36} rel_error {:.3e} (tol {:.0e})", if e.pass { "ok" } else { "FAIL" }, e.target, e.rel_error, e.tolerance);
    }
    for e in &report.errors {
        println!("ERROR {}: {}", e.target, e.message);
    }
    println!("suite {}", if report.pass { "passed" } else { "failed" });
}
