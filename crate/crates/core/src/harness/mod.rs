//! Monte-Carlo experiments comparing estimator MSE with the bounds, file
//! outputs, and the oracle verification suite.

pub mod aggregate;
pub mod config;
pub mod output;
pub mod run;
pub mod verify;

pub use aggregate::{aggregate_mse, MeanStderr, MseRecord, Truth};
pub use config::{Dims, EmSettings, EmVariant, EstimatorKind, ExperimentConfig, NoiseMode, PriorSpec};
pub use output::{emit_outputs, OutputFiles};
pub use run::{
    matching_bound, run_experiment, run_experiment_with_threads, GridPoint, GridStatus, ResultRow, ResultTable,
    SeriesKind,
};
pub use verify::{verify_suite, ClosedForms, ShippedClosedForms, VerifyLevel, VerifyReport};
