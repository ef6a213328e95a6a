//! A reduced desk-scale experiment written to `results/desk_example`:
//! CSV tables, one SVG per figure and a JSON manifest.

use std::path::PathBuf;

use crb_sbl::bounds::Target;
use crb_sbl::harness::{emit_outputs, run_experiment, EstimatorKind, ExperimentConfig};

fn main() -> crb_sbl::Result<()> {
    let mut cfg = ExperimentConfig::desk_default();
    cfg.dims.l = 64;
    cfg.dims.n = vec![48];
    cfg.nu = vec![2.05];
    cfg.m_vectors = vec![1];
    cfg.trials = 20;
    cfg.estimators = vec![EstimatorKind::Em, EstimatorKind::MmseOracle];
    cfg.output_dir = PathBuf::from("results/desk_example");
    let table = run_experiment(&cfg)?;
    for g in &table.grid {
        let em = table.row(g.grid_index, "em", Target::X).unwrap();
        let bound = table.matched(em).unwrap();
        println!(
            "SNR {:>4} dB: EM x-MSE {:.4e} ± {:.1e}, {} {:.4e}",
            g.point.snr_db, em.value, em.stderr, bound.series, bound.value
        );
    }
    let files = emit_outputs(&table, &cfg)?;
    println!("wrote {} and {} figures", files.csv.display(), files.figures.len());
    Ok(())
}
