//! Acceptance suite. Prints one `PASS` or `FAIL` line per criterion and
//! exits nonzero when any criterion fails.
//!
//! Runs without the libtest harness so the criteria execute in order and
//! their lines are never interleaved or captured.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::{array, Array1, Array2, ArrayView2};
use ndarray_linalg::{EigValsh, UPLO};
use rand::Rng;

use crb_sbl::bounds::{
    bcrb_smv, bcrb_unknown_noise, gcp_fisher_term, hcrb_smv, hcrb_unknown_noise, mcrb_gamma, mcrb_gamma_orthogonal,
    mcrb_gamma_xi, mcrb_x_student_t, mmv_bounds, GammaModel, MmvCase, MmvInputs, Target,
};
use crb_sbl::estimators::{em_sbl, mmse_oracle, EmOptions};
use crb_sbl::harness::output::csv_text;
use crb_sbl::harness::{
    run_experiment_with_threads, EstimatorKind, ExperimentConfig, MeanStderr, ResultTable, SeriesKind,
};
use crb_sbl::model::{
    sample_hyperparameters, sample_measurement_matrix, snr_to_noise_variance, synthesize, GcpPrior,
    MeasurementEnsemble, NoiseModel, SignalPrior, StudentTPrior,
};
use crb_sbl::oracle::{mc_fim, mc_fim_gamma, quad_expectation_ig, regularity_check, IgIntegrand};
use crb_sbl::rng::{derive_seed, rng_from_seed};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn within_budget(start: Instant, budget: Duration) -> Result<(), String> {
    let took = start.elapsed();
    if took <= budget {
        Ok(())
    } else {
        Err(format!("took {:.1}s, budget {:.0}s", took.as_secs_f64(), budget.as_secs_f64()))
    }
}

/// HCRB on the noise variance reproduces the reference values
/// 0.133, 0.125, 0.118, 0.111 (×10⁻⁸) at N = 1500..1800, ξ = 10⁻³.
fn c1_hcrb_xi() -> Outcome {
    let xi = 1e-3;
    let reference = [(1500usize, 0.133e-8), (1600, 0.125e-8), (1700, 0.118e-8), (1800, 0.111e-8)];
    let mut worst: f64 = 0.0;
    let mut n1500 = f64::NAN;
    for (n, expected) in reference {
        for l in [4usize, 16] {
            let phi = sample_measurement_matrix(n, l, n as u64).map_err(err)?;
            let gamma = Array1::from_elem(l, 0.5);
            let r = hcrb_unknown_noise(&phi, xi, &GammaModel::Deterministic(gamma)).map_err(err)?;
            let v = r.bound_trace(Target::Xi).ok_or("no xi block")?;
            if n == 1500 {
                n1500 = v;
            }
            worst = worst.max(rel(v, expected));
        }
    }
    check(
        worst <= 0.01 && rel(n1500, 1.333e-9) <= 1e-3,
        format!("N=1500 bound {n1500:.4e}; worst deviation from the four reference rows {:.3}%", 100.0 * worst),
    )
}

/// GCP Fisher term reduces to the Student-t and GDP closed forms.
fn c2_gcp_reductions() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for nu in [0.5, 1.0, 2.01, 3.0, 10.0] {
        for lambda in [0.1, 0.5, 1.0, 2.0, 7.5] {
            let t2 = gcp_fisher_term(&GcpPrior::new(2.0, nu, lambda).map_err(err)?).map_err(err)?;
            let t1 = gcp_fisher_term(&GcpPrior::new(1.0, nu, lambda).map_err(err)?).map_err(err)?;
            worst = worst.max(rel(t2, lambda * (nu + 1.0) / (nu + 3.0)));
            worst = worst.max(rel(t1, lambda * lambda * (nu + 1.0).powi(2) / (nu * (nu + 2.0))));
        }
    }
    within_budget(start, Duration::from_secs(1))?;
    check(worst <= 1e-10, format!("worst relative error {worst:.2e} over 5x5 (nu, lambda) and tau in {{1, 2}}"))
}

fn random_phi(n: usize, l: usize, seed: u64) -> Result<MeasurementEnsemble, String> {
    sample_measurement_matrix(n, l, seed).map_err(err)
}

/// Monte-Carlo FIMs and quadrature expectations agree with the closed forms.
fn c3_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let samples = 100_000;
    let mut lines = Vec::new();
    let mut ok = true;
    let cases: [(usize, usize, Array1<f64>, f64); 2] =
        [(4, 2, array![0.8, 1.6], 0.3), (8, 4, array![0.5, 1.0, 2.0, 0.25], 0.2)];
    for (k, (n, l, gamma, xi)) in cases.iter().enumerate() {
        let phi = random_phi(*n, *l, 40 + k as u64)?;
        let g = mc_fim_gamma(&phi, gamma, *xi, samples, derive_seed(7, &[k as u64, 0])).map_err(err)?;
        let gx = mc_fim(&phi, gamma, *xi, samples, derive_seed(7, &[k as u64, 1])).map_err(err)?;
        ok &= g.rel_error <= 0.05 && gx.rel_error <= 0.05;
        lines.push(format!("N={n}/L={l}: gamma FIM {:.2}%, (gamma, xi) FIM {:.2}%", 100.0 * g.rel_error, 100.0 * gx.rel_error));
    }
    let mut quad_worst: f64 = 0.0;
    for (nu, lambda) in [(2.0, 1.0), (2.01, 3.0), (5.0, 0.2)] {
        let (shape, rate) = (nu / 2.0, nu / (2.0 * lambda));
        let r = quad_expectation_ig(shape, rate, IgIntegrand::Reciprocal).map_err(err)?;
        let closed = lambda;
        quad_worst = quad_worst.max(rel(r.estimate.as_scalar().ok_or("not scalar")?, closed));
        let r = quad_expectation_ig(shape, rate, IgIntegrand::BcrbGammaKernel { m: 1 }).map_err(err)?;
        let closed = lambda * lambda * (nu + 2.0) * (nu + 7.0) / (2.0 * nu);
        quad_worst = quad_worst.max(rel(r.estimate.as_scalar().ok_or("not scalar")?, closed));
    }
    for (c, d, n) in [(3.0, 0.2, 100usize), (5.0, 4e-3, 240), (2.5, 1.0, 8)] {
        let r = quad_expectation_ig(c, d, IgIntegrand::BcrbXiKernel { n_obs: n }).map_err(err)?;
        let closed = c * (c + 1.0) * (n as f64 / 2.0 + c + 3.0) / (d * d);
        quad_worst = quad_worst.max(rel(r.estimate.as_scalar().ok_or("not scalar")?, closed));
    }
    ok &= quad_worst <= 1e-6;
    lines.push(format!("quadrature worst {quad_worst:.2e}"));
    within_budget(start, Duration::from_secs(120))?;
    check(ok, lines.join("; "))
}

/// The score of the marginal likelihood in (γ, ξ) has zero mean.
fn c4_regularity() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_from_seed(404);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for k in 0..5u64 {
        let n = rng.random_range(3..=12);
        let l = rng.random_range(2..=8);
        let phi = sample_measurement_matrix(n, l, 500 + k).map_err(err)?;
        let gamma = Array1::from_shape_fn(l, |_| 10f64.powf(rng.random_range(-1.0..1.0)));
        let xi = 10f64.powf(rng.random_range(-2.0..0.0));
        let r = regularity_check(&phi, &gamma, xi, 100_000, 600 + k).map_err(err)?;
        worst = worst.max(r.rel_error);
        failures += usize::from(!r.pass);
    }
    within_budget(start, Duration::from_secs(60))?;
    check(failures == 0, format!("5 random configurations, largest |mean score| = {worst:.2} standard errors"))
}

fn min_eigenvalue(m: ArrayView2<'_, f64>) -> Result<f64, String> {
    let sym = (&m + &m.t()) * 0.5;
    let ev = sym.eigvalsh(UPLO::Lower).map_err(err)?;
    Ok(ev.iter().copied().fold(f64::INFINITY, f64::min))
}

/// MCRB on x dominates the BCRB x-block, and the orthogonal-case MCRB on γ
/// dominates the hybrid bound 2γ² and converges to it.
fn c5_tightness() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_from_seed(505);
    let mut worst_eig = f64::INFINITY;
    for k in 0..20u64 {
        let n = rng.random_range(4..=40);
        let l = rng.random_range(2..=48);
        let phi = sample_measurement_matrix(n, l, 700 + k).map_err(err)?;
        let xi = 10f64.powf(rng.random_range(-3.0..0.0));
        let nu = rng.random_range(2.01..6.0);
        let lambda = 10f64.powf(rng.random_range(-1.0..3.0));
        let m = mcrb_x_student_t(&phi, xi, nu, lambda).map_err(err)?;
        let b = bcrb_smv(&phi, xi, nu, lambda).map_err(err)?;
        let diff = &m.bound_block(Target::X).ok_or("no x block")? - &b.bound_block(Target::X).ok_or("no x block")?;
        worst_eig = worst_eig.min(min_eigenvalue(diff.view())?);
    }

    let hadamard = MeasurementEnsemble::new(array![[1.0, 1.0], [1.0, -1.0], [1.0, 1.0], [1.0, -1.0]]).map_err(err)?;
    let gamma = array![0.7, 2.5];
    let xi = 0.4;
    let hybrid = hcrb_smv(&hadamard, xi, &gamma).map_err(err)?;
    let hybrid_trace = hybrid.bound_trace(Target::Gamma).ok_or("no gamma block")?;
    let limit: f64 = gamma.iter().map(|g| 2.0 * g * g).sum();
    let mut dominates = rel(hybrid_trace, limit) <= 1e-12;
    let mut previous = f64::INFINITY;
    let mut monotone = true;
    for n in [4usize, 16, 256, 4096, 65_536, 1_000_000] {
        let t = mcrb_gamma_orthogonal(n, xi, &gamma).map_err(err)?.bound_trace(Target::Gamma).ok_or("no gamma block")?;
        dominates &= t >= limit;
        monotone &= t <= previous;
        previous = t;
    }
    let general = mcrb_gamma(&hadamard, xi, &gamma).map_err(err)?.bound_trace(Target::Gamma).ok_or("no gamma block")?;
    let special = mcrb_gamma_orthogonal(4, xi, &gamma).map_err(err)?.bound_trace(Target::Gamma).ok_or("no gamma block")?;
    let at_million = rel(previous, limit);
    within_budget(start, Duration::from_secs(60))?;
    check(
        worst_eig >= -1e-10 && dominates && monotone && at_million <= 1e-4 && rel(general, special) <= 1e-10,
        format!(
            "min eigenvalue of MCRB-x minus BCRB-x over 20 draws {worst_eig:.3e}; orthogonal MCRB-gamma >= 2 gamma^2 \
             and decreasing in N; relative gap at N=1e6 {at_million:.2e}"
        ),
    )
}

/// EM ascends its objective, and the genie MMSE estimator attains the
/// hybrid bound on x on average.
fn c6_estimators() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_from_seed(606);
    let l = 256;
    let ns = [96usize, 128, 192, 240];
    let phis: Vec<MeasurementEnsemble> =
        ns.iter().map(|&n| sample_measurement_matrix(n, l, 800 + n as u64)).collect::<Result<_, _>>().map_err(err)?;
    let mut worst_drop: f64 = 0.0;
    let mut violations = 0;
    for k in 0..100u64 {
        let which = rng.random_range(0..ns.len());
        let phi = &phis[which];
        let nu = rng.random_range(2.01..2.5);
        let snr = rng.random_range(0.0..40.0);
        let prior = StudentTPrior::from_second_moment(nu, 1e-3).map_err(err)?;
        let xi = snr_to_noise_variance(snr, l, 1e-3).map_err(err)?;
        let m = if k % 4 == 3 { 2 } else { 1 };
        let unknown = k % 3 == 2;
        let noise = if unknown { NoiseModel::DeterministicUnknown { xi } } else { NoiseModel::KnownVariance { xi } };
        let inst = synthesize(phi, &SignalPrior::StudentT(prior), &noise, m, 900 + k).map_err(err)?;
        let opts = EmOptions {
            estimate_noise: unknown,
            xi: if unknown { None } else { Some(xi) },
            hyperprior: if k % 2 == 1 { Some(prior) } else { None },
            ..EmOptions::default()
        };
        let r = em_sbl(&inst.observations, phi, &opts).map_err(err)?;
        for w in r.objective_trace.windows(2) {
            let drop = (w[0] - w[1]) / w[0].abs().max(1.0);
            worst_drop = worst_drop.max(drop);
            if drop > 1e-9 {
                violations += 1;
            }
        }
    }

    let (n, l, trials) = (32usize, 16usize, 10_000u64);
    let phi = sample_measurement_matrix(n, l, 31).map_err(err)?;
    let prior = StudentTPrior::from_second_moment(2.05, 1e-3).map_err(err)?;
    let xi = snr_to_noise_variance(20.0, l, 1e-3).map_err(err)?;
    let mut diffs = Vec::with_capacity(trials as usize);
    let mut errors = Vec::with_capacity(trials as usize);
    let mut bounds = Vec::with_capacity(trials as usize);
    for t in 0..trials {
        let inst = synthesize(&phi, &SignalPrior::StudentT(prior), &NoiseModel::KnownVariance { xi }, 1, derive_seed(61, &[t]))
            .map_err(err)?;
        let gamma = inst.gamma_array().ok_or("missing gamma")?;
        let x_hat = mmse_oracle(&inst.observations, &phi, &gamma, xi).map_err(err)?;
        let e: f64 = x_hat.iter().zip(inst.x_true.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        let b = hcrb_smv(&phi, xi, &gamma).map_err(err)?.bound_trace(Target::X).ok_or("no x block")?;
        errors.push(e);
        bounds.push(b);
        diffs.push(e - b);
    }
    let mse = MeanStderr::of(&errors);
    let bound = MeanStderr::of(&bounds);
    let d = MeanStderr::of(&diffs);
    let z = d.mean / d.stderr;
    within_budget(start, Duration::from_secs(300))?;
    check(
        violations == 0 && z.abs() <= 3.0,
        format!(
            "EM: {violations} decreasing steps over 100 instances (largest relative drop {worst_drop:.1e}); \
             genie MSE {:.4e} ± {:.1e} vs averaged HCRB-x {:.4e}, paired z = {z:.2}",
            mse.mean, mse.stderr, bound.mean
        ),
    )
}

fn c7_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk_default();
    cfg.dims.n = vec![240];
    cfg.nu = vec![2.01];
    cfg.m_vectors = vec![1];
    cfg.snr_db = vec![0.0, 10.0, 20.0, 30.0, 40.0];
    cfg.trials = 200;
    cfg.estimators = vec![EstimatorKind::Em, EstimatorKind::Ard, EstimatorKind::MmseOracle];
    cfg.bounds = vec![];
    cfg.output_dir = std::env::temp_dir().join("crb-sbl-acceptance-c7");
    cfg
}

/// Desk-scale trends at L = 256, N = 240, ν = 2.01.
fn c7_desk_trends(threads: usize) -> Outcome {
    let start = Instant::now();
    let cfg = c7_config();
    let table = run_experiment_with_threads(&cfg, threads).map_err(err)?;
    let mut notes = Vec::new();
    let mut ok = true;

    let invalid: Vec<usize> = table.grid.iter().filter(|g| !g.valid).map(|g| g.grid_index).collect();
    if !invalid.is_empty() {
        ok = false;
        notes.push(format!("invalid grid points {invalid:?}"));
    }

    let mut below = Vec::new();
    let mut rows_checked = 0;
    for row in table.rows.iter().filter(|r| r.kind == SeriesKind::Estimator) {
        let bound = table.matched(row).ok_or_else(|| format!("{} {} has no matched bound", row.series, row.target))?;
        rows_checked += 1;
        if row.value < bound.value - 3.0 * row.stderr {
            below.push(format!("{} {} at {} dB", row.series, row.target, row.point.snr_db));
        }
    }
    ok &= below.is_empty();
    notes.push(format!("(a) {rows_checked} estimator rows, {} below their bound by more than 3 stderr {below:?}", below.len()));

    let ratios: Vec<f64> = table
        .grid
        .iter()
        .map(|g| {
            let em = table.row(g.grid_index, "em", Target::X).expect("em x row");
            let bound = table.row(g.grid_index, "MCRB", Target::X).expect("MCRB x row");
            em.value / bound.value
        })
        .collect();
    let nonincreasing = ratios.windows(2).all(|w| w[1] <= w[0]);
    let last = *ratios.last().unwrap_or(&f64::NAN);
    ok &= nonincreasing && last <= 2.0;
    notes.push(format!(
        "(b) EM/MCRB-x ratios {:?}",
        ratios.iter().map(|r| (r * 1000.0).round() / 1000.0).collect::<Vec<_>>()
    ));

    let mut nu_cfg = cfg.clone();
    nu_cfg.nu = vec![2.01, 2.05];
    nu_cfg.snr_db = vec![40.0];
    nu_cfg.estimators = vec![EstimatorKind::Em];
    let nu_table = run_experiment_with_threads(&nu_cfg, threads).map_err(err)?;
    let em_at = |nu: f64| -> Result<f64, String> {
        let g = nu_table.grid.iter().find(|g| g.point.nu == nu).ok_or("missing nu")?;
        Ok(nu_table.row(g.grid_index, "em", Target::X).ok_or("missing em row")?.value)
    };
    let (a, b) = (em_at(2.01)?, em_at(2.05)?);
    ok &= a < b;
    notes.push(format!("(c) EM x-MSE at 40 dB: nu=2.01 {a:.4e}, nu=2.05 {b:.4e}"));

    let took = start.elapsed().as_secs_f64();
    notes.push(format!("{took:.0}s on {threads} thread(s)"));
    if took > 900.0 {
        ok = false;
        notes.push("over the 15 min budget".into());
    }
    check(ok, notes.join("; "))
}

/// All MMV rows equal their single-vector counterparts at M = 1, and the
/// hybrid γ and ξ traces scale as 1/M.
fn c8_mmv() -> Outcome {
    let start = Instant::now();
    let phi = sample_measurement_matrix(12, 8, 88).map_err(err)?;
    let prior = StudentTPrior::new(2.5, 1.5).map_err(err)?;
    let g = sample_hyperparameters(&prior, 8, 89).map_err(err)?;
    let (xi, c, d) = (0.3, 3.0, 0.2);
    let inputs = MmvInputs {
        xi: Some(xi),
        gamma: Some(&g),
        nu: Some(prior.nu),
        lambda: Some(prior.lambda),
        c: Some(c),
        d: Some(d),
        ..MmvInputs::new(&phi)
    };
    let h = hcrb_smv(&phi, xi, &g).map_err(err)?;
    let b = bcrb_smv(&phi, xi, prior.nu, prior.lambda).map_err(err)?;
    let hn = hcrb_unknown_noise(&phi, xi, &GammaModel::Deterministic(g.clone())).map_err(err)?;
    let bn = bcrb_unknown_noise(&phi, &GammaModel::Random { nu: prior.nu, lambda: prior.lambda }, c, d).map_err(err)?;
    let mg = mcrb_gamma(&phi, xi, &g).map_err(err)?;
    let mgx = mcrb_gamma_xi(&phi, xi, &g).map_err(err)?;
    let pairs: Vec<(MmvCase, Array2<f64>)> = vec![
        (MmvCase::HcrbGamma, h.fim_block(Target::Gamma, Target::Gamma).ok_or("block")?.to_owned()),
        (MmvCase::BcrbGamma, b.fim_block(Target::Gamma, Target::Gamma).ok_or("block")?.to_owned()),
        (MmvCase::McrbGamma, mg.fim.clone()),
        (MmvCase::HcrbW, h.fim_block(Target::X, Target::X).ok_or("block")?.to_owned()),
        (MmvCase::BcrbW, b.fim_block(Target::X, Target::X).ok_or("block")?.to_owned()),
        (MmvCase::HcrbXi, hn.fim_block(Target::Xi, Target::Xi).ok_or("block")?.to_owned()),
        (MmvCase::BcrbXi, bn.fim_block(Target::Xi, Target::Xi).ok_or("block")?.to_owned()),
        (MmvCase::McrbGammaXi, mgx.fim.clone()),
    ];
    let mut worst: f64 = 0.0;
    for (case, expected) in &pairs {
        let r = mmv_bounds(*case, &inputs, 1).map_err(err)?;
        for (u, v) in r.fim.iter().zip(expected.iter()) {
            worst = worst.max((u - v).abs() / v.abs().max(1.0));
        }
    }
    let mut scaling: f64 = 0.0;
    for case in [MmvCase::HcrbGamma, MmvCase::HcrbXi] {
        let base = mmv_bounds(case, &inputs, 1).map_err(err)?.total_bound_trace();
        for m in [2usize, 4, 8] {
            let t = mmv_bounds(case, &inputs, m).map_err(err)?.total_bound_trace();
            scaling = scaling.max(rel(t * m as f64, base));
        }
    }
    within_budget(start, Duration::from_secs(1))?;
    check(
        worst <= 1e-12 && scaling <= 1e-12,
        format!("{} rows at M=1, worst difference {worst:.1e}; 1/M scaling error {scaling:.1e}", pairs.len()),
    )
}

fn c9_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk_default();
    cfg.dims.n = vec![96];
    cfg.snr_db = vec![0.0, 20.0, 40.0];
    cfg.nu = vec![2.01];
    cfg.m_vectors = vec![1, 8];
    cfg.trials = 16;
    cfg.estimators = vec![EstimatorKind::Em, EstimatorKind::Ard, EstimatorKind::MmseOracle];
    cfg.output_dir = PathBuf::from("unused");
    cfg
}

/// Identical configuration and seed give byte-identical CSV output across
/// runs and thread counts.
fn c9_determinism() -> Outcome {
    let cfg = c9_config();
    let run = |threads: usize| -> Result<(ResultTable, String), String> {
        let t = run_experiment_with_threads(&cfg, threads).map_err(err)?;
        let csv = csv_text(&t, false);
        Ok((t, csv))
    };
    let (t1, first) = run(1)?;
    let (_, second) = run(1)?;
    let (_, eight) = run(8)?;
    let dir_a = tempfile::tempdir().map_err(err)?;
    let dir_b = tempfile::tempdir().map_err(err)?;
    let fa = crb_sbl::harness::output::emit_outputs_to(&t1, &cfg, dir_a.path()).map_err(err)?;
    let fb = crb_sbl::harness::output::emit_outputs_to(&t1, &cfg, dir_b.path()).map_err(err)?;
    let files_equal = std::fs::read(&fa.csv).map_err(err)? == std::fs::read(&fb.csv).map_err(err)?;
    check(
        first == second && first == eight && files_equal && first.as_bytes() == std::fs::read(&fa.csv).map_err(err)?,
        format!("{} CSV lines; repeat run identical: {}; 1 vs 8 threads identical: {}", first.lines().count(), first == second, first == eight),
    )
}

fn main() -> ExitCode {
    crb_sbl::linalg::set_blas_threads(1);
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("C1 analytic HCRB-xi reproduction", Box::new(c1_hcrb_xi)),
        ("C2 GCP reductions", Box::new(c2_gcp_reductions)),
        ("C3 oracle equivalence", Box::new(c3_oracle_equivalence)),
        ("C4 regularity", Box::new(c4_regularity)),
        ("C5 tightness ordering", Box::new(c5_tightness)),
        ("C6 estimator checks", Box::new(c6_estimators)),
        ("C7 desk-scale trend reproduction", Box::new(move || c7_desk_trends(threads))),
        ("C8 MMV consistency", Box::new(c8_mmv)),
        ("C9 determinism", Box::new(c9_determinism)),
    ];
    let only: Option<String> = std::env::args().skip(1).find(|a| a.starts_with('C') || a.starts_with('c'));
    let mut failed = 0;
    for (name, f) in &criteria {
        if let Some(o) = &only {
            if !name.to_lowercase().starts_with(&o.to_lowercase()) {
                continue;
            }
        }
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} [{secs:.1}s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} [{secs:.1}s]: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion/criteria failed");
        ExitCode::FAILURE
    }
}
