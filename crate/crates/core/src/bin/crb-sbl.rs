//! Command-line front end: closed-form bounds, single estimator runs,
//! Monte-Carlo experiments and the oracle verification suite.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array1;
use serde::Serialize;

use crb_sbl::bounds::{self, BoundReport, GammaModel, MmvCase, MmvInputs};
use crb_sbl::estimators::{ard_sbl, em_sbl, mmse_oracle, ArdOptions, EmOptions, EstimateResult};
use crb_sbl::harness::{
    aggregate_mse, emit_outputs, run_experiment_with_threads, verify_suite, ExperimentConfig, MseRecord,
    ShippedClosedForms, Truth, VerifyLevel,
};
use crb_sbl::io::{read_json, write_json};
use crb_sbl::model::{
    sample_hyperparameters, sample_measurement_matrix, snr_to_noise_variance, synthesize, GcpPrior, IgDistribution,
    NoiseModel, SblInstance, SignalPrior, StudentTPrior,
};
use crb_sbl::rng::derive_seed;
use crb_sbl::{Result, SblError};

/// Environment variable read when `--threads` is absent.
const THREADS_ENV: &str = "CRB_SBL_THREADS";

#[derive(Debug, Parser)]
#[command(name = "crb-sbl", version, about = "Cramér-Rao type bounds and reference estimators for sparse Bayesian learning")]
struct Cli {
    /// Worker threads (defaults to the available cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    threads: Option<usize>,
    /// Master seed; overrides the seed of a configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving every output file.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate one closed-form bound on a synthesized measurement matrix.
    Bounds(BoundsArgs),
    /// Run one estimator on a synthesized (or loaded) instance.
    Estimate(EstimateArgs),
    /// Run a Monte-Carlo experiment grid and write CSV, SVG and JSON outputs.
    Experiment(ExperimentArgs),
    /// Check every closed form against numerical oracles.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct ProblemArgs {
    /// Signal dimension L.
    #[arg(long, default_value_t = 64)]
    l: usize,
    /// Number of measurements N.
    #[arg(long, default_value_t = 48)]
    n: usize,
    #[arg(long, default_value_t = 20.0)]
    snr_db: f64,
    /// Student-t degrees of freedom.
    #[arg(long, default_value_t = 2.01)]
    nu: f64,
    /// Prior second moment E[x_i²]; fixes λ for the given ν.
    #[arg(long, default_value_t = 1e-3)]
    second_moment: f64,
    /// Number of measurement vectors M.
    #[arg(long, default_value_t = 1)]
    m: usize,
}

impl ProblemArgs {
    fn prior(&self) -> Result<StudentTPrior> {
        StudentTPrior::from_second_moment(self.nu, self.second_moment)
    }

    fn xi(&self) -> Result<f64> {
        snr_to_noise_variance(self.snr_db, self.l, self.second_moment)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BoundName {
    Hcrb,
    Bcrb,
    McrbGamma,
    McrbX,
    McrbGammaXi,
    HcrbUnknownNoise,
    BcrbUnknownNoise,
    Mmv,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[arg(long, value_enum)]
    bound: BoundName,
    #[command(flatten)]
    problem: ProblemArgs,
    /// GCP shape τ; switches `mcrb-x` to the generalized compressible prior.
    #[arg(long)]
    tau: Option<f64>,
    /// Shape c of the IG(c, (c−1)ξ) noise prior of `bcrb-unknown-noise`.
    #[arg(long, default_value_t = 5.0)]
    c: f64,
    /// Row of the multiple-measurement table used by `mmv`.
    #[arg(long, value_parser = parse_mmv_case)]
    mmv_case: Option<MmvCase>,
}

fn parse_mmv_case(s: &str) -> std::result::Result<MmvCase, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
        let names: Vec<String> =
            MmvCase::ALL.iter().map(|c| serde_json::to_value(c).unwrap().as_str().unwrap().to_string()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
enum EstimatorName {
    Em,
    Ard,
    MmseOracle,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long, value_enum, default_value = "em")]
    estimator: EstimatorName,
    #[command(flatten)]
    problem: ProblemArgs,
    /// Estimate the noise variance jointly (EM only).
    #[arg(long)]
    unknown_noise: bool,
    /// Use the IG hyperprior in the EM M-step.
    #[arg(long)]
    map: bool,
    /// Load the instance from JSON instead of synthesizing one.
    #[arg(long)]
    instance: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// JSON experiment configuration; desk-scale defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the L = 2048 grid instead of the desk-scale defaults.
    #[arg(long)]
    full_scale: bool,
    /// Override the number of trials per grid point.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, default_value = "quick", value_parser = parse_level)]
    level: VerifyLevel,
}

fn parse_level(s: &str) -> std::result::Result<VerifyLevel, String> {
    s.parse().map_err(|e: SblError| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    crb_sbl::linalg::set_blas_threads(1);
    let threads = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1);
    let out = match &cli.command {
        Command::Bounds(a) => cmd_bounds(&cli, a),
        Command::Estimate(a) => cmd_estimate(&cli, a),
        Command::Experiment(a) => cmd_experiment(&cli, a, threads),
        Command::Verify(a) => cmd_verify(&cli, a, threads),
    };
    match out {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn output_dir(cli: &Cli, fallback: &Path) -> Result<PathBuf> {
    let dir = cli.output_dir.clone().unwrap_or_else(|| fallback.to_path_buf());
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn cmd_bounds(cli: &Cli, a: &BoundsArgs) -> Result<ExitCode> {
    let p = &a.problem;
    let seed = cli.seed.unwrap_or(0);
    let phi = sample_measurement_matrix(p.n, p.l, derive_seed(seed, &[0]))?;
    let prior = p.prior()?;
    let xi = p.xi()?;
    let gamma = || sample_hyperparameters(&prior, p.l, derive_seed(seed, &[1]));
    if p.m != 1 && !matches!(a.bound, BoundName::Mmv) {
        return Err(SblError::InvalidArgument("--m other than 1 requires --bound mmv".into()));
    }
    let report: BoundReport = match a.bound {
        BoundName::Hcrb => bounds::hcrb_smv(&phi, xi, &gamma()?)?,
        BoundName::Bcrb => bounds::bcrb_smv(&phi, xi, prior.nu, prior.lambda)?,
        BoundName::McrbGamma => bounds::mcrb_gamma(&phi, xi, &gamma()?)?,
        BoundName::McrbX => match a.tau {
            Some(tau) => bounds::mcrb_x_gcp(&phi, xi, &GcpPrior::new(tau, prior.nu, prior.lambda)?)?,
            None => bounds::mcrb_x_student_t(&phi, xi, prior.nu, prior.lambda)?,
        },
        BoundName::McrbGammaXi => bounds::mcrb_gamma_xi(&phi, xi, &gamma()?)?,
        BoundName::HcrbUnknownNoise => bounds::hcrb_unknown_noise(&phi, xi, &GammaModel::Deterministic(gamma()?))?,
        BoundName::BcrbUnknownNoise => {
            let model = GammaModel::Random { nu: prior.nu, lambda: prior.lambda };
            bounds::bcrb_unknown_noise(&phi, &model, a.c, (a.c - 1.0) * xi)?
        }
        BoundName::Mmv => {
            let case = a
                .mmv_case
                .ok_or_else(|| SblError::InvalidArgument("--bound mmv needs --mmv-case".into()))?;
            let g: Array1<f64> = gamma()?;
            let inputs = MmvInputs {
                xi: Some(xi),
                gamma: Some(&g),
                nu: Some(prior.nu),
                lambda: Some(prior.lambda),
                c: Some(a.c),
                d: Some((a.c - 1.0) * xi),
                ..MmvInputs::new(&phi)
            };
            bounds::mmv_bounds(case, &inputs, p.m)?
        }
    };
    let summary = report.summary();
    let dir = output_dir(cli, Path::new("."))?;
    let path = dir.join(format!("bound_{}.json", summary.name));
    write_json(&path, &summary)?;
    print_json(&summary)?;
    eprintln!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    estimator: &'static str,
    seed: u64,
    mse: Vec<MseRecord>,
    result: &'a EstimateResult,
}

fn cmd_estimate(cli: &Cli, a: &EstimateArgs) -> Result<ExitCode> {
    let p = &a.problem;
    let seed = cli.seed.unwrap_or(0);
    let inst: SblInstance = match &a.instance {
        Some(path) => read_json(path)?,
        None => {
            let phi = sample_measurement_matrix(p.n, p.l, derive_seed(seed, &[0]))?;
            let xi = p.xi()?;
            let noise = if a.unknown_noise {
                NoiseModel::DeterministicUnknown { xi }
            } else {
                NoiseModel::KnownVariance { xi }
            };
            synthesize(&phi, &SignalPrior::StudentT(p.prior()?), &noise, p.m, derive_seed(seed, &[1]))?
        }
    };
    let y = &inst.observations;
    let (name, result) = match a.estimator {
        EstimatorName::Em => {
            let opts = EmOptions {
                estimate_noise: a.unknown_noise,
                xi: if a.unknown_noise { None } else { Some(inst.xi_true) },
                hyperprior: if a.map { Some(p.prior()?) } else { None },
                noise_prior: None::<IgDistribution>,
                ..EmOptions::default()
            };
            ("em", em_sbl(y, &inst.phi, &opts)?)
        }
        EstimatorName::Ard => ("ard", ard_sbl(y, &inst.phi, inst.xi_true, &ArdOptions::default())?),
        EstimatorName::MmseOracle => {
            let gamma = inst
                .gamma_array()
                .ok_or_else(|| SblError::InvalidArgument("the MMSE oracle needs the true hyperparameters".into()))?;
            let x_hat = mmse_oracle(y, &inst.phi, &gamma, inst.xi_true)?;
            let result = EstimateResult {
                x_hat,
                gamma_hat: vec![],
                xi_hat: None,
                iterations: 0,
                converged: true,
                objective_trace: vec![],
            };
            ("mmse-oracle", result)
        }
    };
    let mse = aggregate_mse(std::slice::from_ref(&result), &[Truth::from(&inst)])?;
    let dir = output_dir(cli, Path::new("."))?;
    let path = dir.join(format!("estimate_{name}.json"));
    let output = EstimateOutput { estimator: name, seed, mse, result: &result };
    write_json(&path, &output)?;
    for r in &output.mse {
        println!("{:<6} {:<12} mse {:.6e}  per-component {:.6e}", r.target.as_str(), name, r.mse, r.per_component);
    }
    println!("iterations {}  converged {}", result.iterations, result.converged);
    eprintln!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_experiment(cli: &Cli, a: &ExperimentArgs, threads: usize) -> Result<ExitCode> {
    if a.full_scale {
        eprintln!(
            "warning: --full-scale selects L = 2048 with N up to 1500; a single grid point can take hours \
             and several GB of memory"
        );
    }
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None if a.full_scale => ExperimentConfig::full_scale(),
        None => ExperimentConfig::desk_default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    let table = run_experiment_with_threads(&cfg, threads)?;
    for g in table.grid.iter().filter(|g| !g.valid) {
        eprintln!(
            "warning: grid point {} (N={}, SNR={} dB, ν={}, M={}) invalid: {} failed trials, first error: {}",
            g.grid_index,
            g.point.n,
            g.point.snr_db,
            g.point.nu,
            g.point.m,
            g.max_failures,
            g.first_error.as_deref().unwrap_or("-")
        );
    }
    let files = emit_outputs(&table, &cfg)?;
    print_json(&files)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(cli: &Cli, a: &VerifyArgs, threads: usize) -> Result<ExitCode> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SblError::InvalidArgument(format!("thread pool: {e}")))?;
    let seed = cli.seed.unwrap_or(crb_sbl::harness::verify::VERIFY_SEED);
    let report = pool.install(|| verify_suite(a.level, &ShippedClosedForms, seed));
    let dir = output_dir(cli, Path::new("."))?;
    let path = dir.join("verify_report.json");
    write_json(&path, &report)?;
    for e in &report.entries {
        println!("{} {} (rel_error {:.3e})", if e.pass { "PASS" } else { "FAIL" }, e.target, e.rel_error);
    }
    for e in &report.errors {
        println!("FAIL {} ({})", e.target, e.message);
    }
    println!("{} -> {}", if report.pass { "verify passed" } else { "verify FAILED" }, path.display());
    Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
