//! Grid execution: instance synthesis, estimator runs and bound overlays.
//!
//! Grid points are enumerated with `N` outermost, then `ν`, `M` and SNR.
//! Trial `t` at grid point `g` uses the seed `derive_seed(master, [g, t])`;
//! the measurement matrix of each `N` uses `derive_seed(master, [PHI_TAG, N])`
//! and is shared by every grid point with that `N`. Trials run on a rayon
//! pool and are reduced in index order, so the table does not depend on
//! the number of workers.

use std::collections::BTreeMap;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregate::{squared_errors, MseRecord, Truth};
use super::config::{EmVariant, EstimatorKind, ExperimentConfig, NoiseMode};
use crate::bounds::{mcrb_x_gcp, mcrb_x_student_t, mmv_bounds, BoundKind, BoundReport, MmvCase, MmvInputs, Target};
use crate::error::{invalid, Result};
use crate::estimators::{ard_sbl, em_sbl, mmse_oracle, EmOptions, EstimateResult};
use crate::model::{
    sample_measurement_matrix, snr_to_noise_variance, synthesize, IgDistribution, MeasurementEnsemble, NoiseModel,
    SignalPrior, StudentTPrior,
};
use crate::rng::derive_seed;

/// Tag mixed into the seed of the per-`N` measurement matrix.
pub const PHI_TAG: u64 = 0x5048_4900;

/// Largest share of failed trials a grid point may have and stay valid.
pub const MAX_FAILURE_SHARE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub l: usize,
    pub n: usize,
    pub snr_db: f64,
    pub nu: f64,
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesKind {
    Estimator,
    Bound,
}

/// One `(grid point, series, target)` entry.
///
/// Estimator rows hold the MSE over successful trials. Bound rows hold the
/// bound trace: averaged over trials for bounds that depend on the realized
/// `γ` or `ξ`, a single evaluation (`trials = 1`, `stderr = 0`) otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub grid_index: usize,
    pub point: GridPoint,
    pub series: String,
    pub kind: SeriesKind,
    pub target: Target,
    pub value: f64,
    pub stderr: f64,
    pub per_component: f64,
    pub per_component_stderr: f64,
    pub trials: usize,
    pub failures: usize,
    /// For estimator rows, the bound series the MSE is compared against.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matched_bound: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridStatus {
    pub grid_index: usize,
    pub point: GridPoint,
    pub valid: bool,
    /// Largest failure count over the rows of this point.
    pub max_failures: usize,
    /// First error message seen at this point, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub grid: Vec<GridStatus>,
}

impl ResultTable {
    /// Row lookup by grid index, series and target.
    pub fn row(&self, grid_index: usize, series: &str, target: Target) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.grid_index == grid_index && r.series == series && r.target == target)
    }

    /// The bound row an estimator row is compared against.
    pub fn matched(&self, row: &ResultRow) -> Option<&ResultRow> {
        self.row(row.grid_index, row.matched_bound.as_deref()?, row.target)
    }

    /// Checks that every estimator row has its bound row and that valid
    /// points carry nonnegative values.
    pub fn validate(&self) -> Result<()> {
        for r in self.rows.iter().filter(|r| r.kind == SeriesKind::Estimator) {
            if self.matched(r).is_none() {
                return Err(invalid(format!(
                    "estimator row {}/{} at grid point {} has no matching bound row",
                    r.series, r.target, r.grid_index
                )));
            }
        }
        for r in &self.rows {
            if self.grid[r.grid_index].valid && !(r.value >= 0.0) {
                return Err(invalid(format!("row {}/{} has value {}", r.series, r.target, r.value)));
            }
        }
        Ok(())
    }
}

/// Bound series every estimator row is compared against.
///
/// - `mmse-oracle` x: the hybrid bound, whose x block is the Bayes risk of
///   the posterior mean given the realized `γ`.
/// - `em`/`ard` x: the marginalized bound for one measurement vector, the
///   Bayesian bound otherwise.
/// - `γ`: the Bayesian bound, which holds for any estimator.
/// - `ξ`: the Bayesian bound for random noise, the hybrid bound otherwise.
pub fn matching_bound(estimator: EstimatorKind, target: Target, m: usize, noise: &NoiseMode) -> BoundKind {
    match (estimator, target) {
        (EstimatorKind::MmseOracle, _) => BoundKind::Hcrb,
        (_, Target::X) if m == 1 => BoundKind::Mcrb,
        (_, Target::X) | (_, Target::Gamma) => BoundKind::Bcrb,
        (_, Target::Xi) => match noise {
            NoiseMode::RandomIg { .. } => BoundKind::Bcrb,
            _ => BoundKind::Hcrb,
        },
    }
}

/// Everything shared by the trials of one grid point.
struct PointCtx<'a> {
    cfg: &'a ExperimentConfig,
    index: usize,
    point: GridPoint,
    phi: &'a MeasurementEnsemble,
    prior: SignalPrior,
    /// Noise variance implied by the SNR (the mean when the noise is random).
    xi_snr: f64,
    noise_law: Option<IgDistribution>,
}

impl PointCtx<'_> {
    fn student_t(&self) -> Option<StudentTPrior> {
        match self.prior {
            SignalPrior::StudentT(p) => Some(p),
            SignalPrior::Gcp(_) => None,
        }
    }

    fn estimators(&self) -> Vec<EstimatorKind> {
        let mut v: Vec<EstimatorKind> = self
            .cfg
            .estimators
            .iter()
            .copied()
            .filter(|e| match e {
                EstimatorKind::Em => true,
                EstimatorKind::Ard => self.point.m == 1,
                EstimatorKind::MmseOracle => self.student_t().is_some(),
            })
            .collect();
        v.sort();
        v.dedup();
        v
    }

    fn estimator_targets(&self, e: EstimatorKind) -> Vec<Target> {
        let mut t = vec![Target::X];
        if e != EstimatorKind::MmseOracle && self.student_t().is_some() {
            t.push(Target::Gamma);
        }
        if e == EstimatorKind::Em && self.cfg.noise_mode.estimates_noise() {
            t.push(Target::Xi);
        }
        t
    }

    /// Targets a bound series covers at this point, and whether each one
    /// depends on the realized trial (online) or not (offline).
    fn bound_targets(&self, kind: BoundKind) -> Vec<(Target, bool)> {
        let st = self.student_t().is_some();
        let noise = self.cfg.noise_mode;
        let random = matches!(noise, NoiseMode::RandomIg { .. });
        let mut t = Vec::new();
        match kind {
            BoundKind::Hcrb if st => {
                t.push((Target::X, true));
                t.push((Target::Gamma, true));
                if noise.estimates_noise() {
                    t.push((Target::Xi, true));
                }
            }
            BoundKind::Bcrb if st => {
                t.push((Target::X, false));
                t.push((Target::Gamma, false));
                if random {
                    t.push((Target::Xi, false));
                }
            }
            BoundKind::Mcrb => {
                if self.point.m == 1 {
                    t.push((Target::X, random));
                }
                if st {
                    t.push((Target::Gamma, true));
                    if noise.estimates_noise() {
                        t.push((Target::Xi, true));
                    }
                }
            }
            _ => {}
        }
        t
    }

    fn bound_kinds(&self) -> Vec<BoundKind> {
        let mut kinds: Vec<BoundKind> = self.cfg.bounds.clone();
        for e in self.estimators() {
            for t in self.estimator_targets(e) {
                kinds.push(matching_bound(e, t, self.point.m, &self.cfg.noise_mode));
            }
        }
        let order = |k: &BoundKind| match k {
            BoundKind::Hcrb => 0,
            BoundKind::Bcrb => 1,
            BoundKind::Mcrb => 2,
        };
        kinds.sort_by_key(order);
        kinds.dedup();
        kinds
    }

    fn noise_model(&self) -> NoiseModel {
        match (self.cfg.noise_mode, self.noise_law) {
            (NoiseMode::Known, _) => NoiseModel::KnownVariance { xi: self.xi_snr },
            (_, Some(ig)) => NoiseModel::RandomIg { ig },
            _ => NoiseModel::DeterministicUnknown { xi: self.xi_snr },
        }
    }

    fn em_options(&self, xi_true: f64) -> EmOptions {
        let s = &self.cfg.em;
        let estimate_noise = self.cfg.noise_mode.estimates_noise();
        let map = s.variant == EmVariant::Map;
        EmOptions {
            max_iter: s.max_iter,
            tol: s.tol,
            estimate_noise,
            xi: if estimate_noise { None } else { Some(xi_true) },
            hyperprior: if map { self.student_t() } else { None },
            noise_prior: if map && estimate_noise { self.noise_law } else { None },
            initial_gamma: None,
        }
    }

    fn mmv_inputs<'b>(&'b self, gamma: Option<&'b Array1<f64>>, xi: f64) -> MmvInputs<'b> {
        let st = self.student_t();
        MmvInputs {
            phi: self.phi,
            xi: Some(xi),
            gamma,
            nu: st.map(|p| p.nu),
            lambda: st.map(|p| p.lambda),
            c: self.noise_law.map(|ig| ig.shape),
            d: self.noise_law.map(|ig| ig.rate),
        }
    }

    /// Noise variance the offline x bounds are evaluated at: the SNR value,
    /// or `1/E[1/ξ] = d/c` when the noise is random.
    fn offline_xi(&self) -> f64 {
        match self.noise_law {
            Some(ig) => ig.rate / ig.shape,
            None => self.xi_snr,
        }
    }

    /// Bound trace of one `(series, target)` entry. Online entries pass the
    /// trial's realized `ξ` (and `γ` where the bound needs it); offline
    /// entries pass `None` for both.
    fn bound_value(&self, kind: BoundKind, target: Target, gamma: Option<&Array1<f64>>, xi: Option<f64>) -> Result<f64> {
        let m = self.point.m;
        let trace = |r: BoundReport| {
            r.bound_trace(target).ok_or_else(|| invalid(format!("{} has no {target} block", r.name)))
        };
        let need_gamma = || gamma.ok_or_else(|| invalid("online bound without hyperparameters"));
        match (kind, xi) {
            (BoundKind::Mcrb, _) if target == Target::X => {
                let xi = xi.unwrap_or(self.offline_xi());
                match self.prior {
                    SignalPrior::StudentT(p) => trace(mcrb_x_student_t(self.phi, xi, p.nu, p.lambda)?),
                    SignalPrior::Gcp(p) => trace(mcrb_x_gcp(self.phi, xi, &p)?),
                }
            }
            (BoundKind::Hcrb, Some(xi)) => {
                let case = match target {
                    Target::X => MmvCase::HcrbW,
                    Target::Gamma => MmvCase::HcrbGamma,
                    Target::Xi => MmvCase::HcrbXi,
                };
                trace(mmv_bounds(case, &self.mmv_inputs(Some(need_gamma()?), xi), m)?)
            }
            (BoundKind::Mcrb, Some(xi)) => {
                let case =
                    if self.cfg.noise_mode.estimates_noise() { MmvCase::McrbGammaXi } else { MmvCase::McrbGamma };
                trace(mmv_bounds(case, &self.mmv_inputs(Some(need_gamma()?), xi), m)?)
            }
            (BoundKind::Bcrb, None) => {
                let case = match target {
                    Target::X => MmvCase::BcrbW,
                    Target::Gamma => MmvCase::BcrbGamma,
                    Target::Xi => MmvCase::BcrbXi,
                };
                trace(mmv_bounds(case, &self.mmv_inputs(None, self.offline_xi()), m)?)
            }
            _ => Err(invalid(format!("no {kind} {target} bound for this configuration"))),
        }
    }
}

/// Outcome of one entry in one trial: a squared error or a bound trace.
type Outcome = std::result::Result<f64, String>;

/// Per-trial outcomes for each planned `(series, target)` slot.
struct TrialRecord {
    slots: Vec<Outcome>,
}

#[derive(Debug, Clone)]
struct Slot {
    series: String,
    kind: SeriesKind,
    target: Target,
    online: bool,
    components: usize,
    matched_bound: Option<String>,
    bound_kind: Option<BoundKind>,
    estimator: Option<EstimatorKind>,
}

fn plan(ctx: &PointCtx<'_>) -> Vec<Slot> {
    let (l, m) = (ctx.point.l, ctx.point.m);
    let components = |t: Target| match t {
        Target::X => l * m,
        Target::Gamma => l,
        Target::Xi => 1,
    };
    let mut slots = Vec::new();
    for e in ctx.estimators() {
        for t in ctx.estimator_targets(e) {
            slots.push(Slot {
                series: e.as_str().to_string(),
                kind: SeriesKind::Estimator,
                target: t,
                online: true,
                components: components(t),
                matched_bound: Some(matching_bound(e, t, m, &ctx.cfg.noise_mode).to_string()),
                bound_kind: None,
                estimator: Some(e),
            });
        }
    }
    for k in ctx.bound_kinds() {
        for (t, online) in ctx.bound_targets(k) {
            slots.push(Slot {
                series: k.to_string(),
                kind: SeriesKind::Bound,
                target: t,
                online,
                components: components(t),
                matched_bound: None,
                bound_kind: Some(k),
                estimator: None,
            });
        }
    }
    slots
}

fn run_estimator(ctx: &PointCtx<'_>, e: EstimatorKind, y: &ndarray::Array2<f64>, xi_true: f64, gamma: Option<&Array1<f64>>) -> Result<EstimateResult> {
    match e {
        EstimatorKind::Em => em_sbl(y, ctx.phi, &ctx.em_options(xi_true)),
        EstimatorKind::Ard => ard_sbl(y, ctx.phi, xi_true, &ctx.cfg.ard),
        EstimatorKind::MmseOracle => {
            let g = gamma.ok_or_else(|| invalid("the genie estimator needs hyperparameters"))?;
            let x_hat = mmse_oracle(y, ctx.phi, g, xi_true)?;
            Ok(EstimateResult {
                x_hat,
                gamma_hat: Vec::new(),
                xi_hat: None,
                iterations: 0,
                converged: true,
                objective_trace: Vec::new(),
            })
        }
    }
}

fn run_trial(ctx: &PointCtx<'_>, slots: &[Slot], trial: usize) -> TrialRecord {
    let seed = derive_seed(ctx.cfg.master_seed, &[ctx.index as u64, trial as u64]);
    let inst = match synthesize(ctx.phi, &ctx.prior, &ctx.noise_model(), ctx.point.m, seed) {
        Ok(i) => i,
        Err(e) => {
            let msg = format!("synthesis: {e}");
            return TrialRecord {
                slots: slots.iter().map(|s| if s.online { Err(msg.clone()) } else { Ok(0.0) }).collect(),
            };
        }
    };
    let truth = Truth::from(&inst);
    let gamma = inst.gamma_array();
    let mut errors: BTreeMap<EstimatorKind, std::result::Result<Vec<(Target, f64, usize)>, String>> = BTreeMap::new();
    for e in ctx.estimators() {
        let r = run_estimator(ctx, e, &inst.observations, inst.xi_true, gamma.as_ref())
            .and_then(|est| squared_errors(&est, &truth))
            .map_err(|err| format!("{}: {err}", e.as_str()));
        errors.insert(e, r);
    }
    let out = slots
        .iter()
        .map(|s| {
            if !s.online {
                return Ok(0.0);
            }
            match (s.estimator, s.bound_kind) {
                (Some(e), _) => match &errors[&e] {
                    Ok(v) => v
                        .iter()
                        .find(|(t, _, _)| *t == s.target)
                        .map(|(_, err, _)| *err)
                        .ok_or_else(|| format!("{}: no {} estimate", e.as_str(), s.target)),
                    Err(msg) => Err(msg.clone()),
                },
                (None, Some(k)) => ctx
                    .bound_value(k, s.target, gamma.as_ref(), Some(inst.xi_true))
                    .map_err(|err| format!("{k} {}: {err}", s.target)),
                (None, None) => Err("empty slot".to_string()),
            }
        })
        .collect();
    TrialRecord { slots: out }
}

fn enumerate_grid(cfg: &ExperimentConfig) -> Vec<GridPoint> {
    let mut points = Vec::new();
    for &n in &cfg.dims.n {
        for &nu in &cfg.nu {
            for &m in &cfg.m_vectors {
                for &snr_db in &cfg.snr_db {
                    points.push(GridPoint { l: cfg.dims.l, n, snr_db, nu, m });
                }
            }
        }
    }
    points
}

/// Runs the whole grid on the current rayon pool.
///
/// Trial failures are counted per row; a point where some row lost more
/// than [`MAX_FAILURE_SHARE`] of its trials is marked invalid. Errors in the
/// configuration or in an offline bound are returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate(rayon::current_num_threads())?;
    crate::linalg::set_blas_threads(1);
    if matches!(cfg.prior, super::config::PriorSpec::Gcp { .. }) && cfg.m_vectors.iter().any(|&m| m != 1) {
        return Err(invalid("GCP experiments support a single measurement vector only"));
    }
    let mut phis: BTreeMap<usize, MeasurementEnsemble> = BTreeMap::new();
    for &n in &cfg.dims.n {
        if !phis.contains_key(&n) {
            let seed = derive_seed(cfg.master_seed, &[PHI_TAG, n as u64]);
            phis.insert(n, sample_measurement_matrix(n, cfg.dims.l, seed)?);
        }
    }

    let mut rows = Vec::new();
    let mut grid = Vec::new();
    for (index, point) in enumerate_grid(cfg).into_iter().enumerate() {
        let xi_snr = snr_to_noise_variance(point.snr_db, point.l, cfg.prior.second_moment())?;
        let ctx = PointCtx {
            cfg,
            index,
            point,
            phi: &phis[&point.n],
            prior: cfg.prior.at(point.nu)?,
            xi_snr,
            noise_law: cfg.noise_mode.noise_law(xi_snr)?,
        };
        let slots = plan(&ctx);
        let records: Vec<TrialRecord> = (0..cfg.trials).into_par_iter().map(|t| run_trial(&ctx, &slots, t)).collect();

        let mut first_error = None;
        let mut max_failures = 0;
        for (k, slot) in slots.iter().enumerate() {
            let (summary, trials, failures) = if slot.online {
                let mut values = Vec::with_capacity(records.len());
                let mut failures = 0;
                for rec in &records {
                    match &rec.slots[k] {
                        Ok(v) => values.push(*v),
                        Err(msg) => {
                            failures += 1;
                            first_error.get_or_insert_with(|| msg.clone());
                        }
                    }
                }
                (MseRecord::from_errors(slot.target, &values, slot.components), values.len(), failures)
            } else {
                let kind = slot.bound_kind.expect("offline slots are bounds");
                let v = ctx.bound_value(kind, slot.target, None, None)?;
                (MseRecord::from_errors(slot.target, &[v], slot.components), 1, 0)
            };
            max_failures = max_failures.max(failures);
            rows.push(ResultRow {
                grid_index: index,
                point,
                series: slot.series.clone(),
                kind: slot.kind,
                target: slot.target,
                value: summary.mse,
                stderr: summary.stderr,
                per_component: summary.per_component,
                per_component_stderr: summary.per_component_stderr,
                trials,
                failures,
                matched_bound: slot.matched_bound.clone(),
            });
        }
        let valid = (max_failures as f64) <= MAX_FAILURE_SHARE * cfg.trials as f64;
        grid.push(GridStatus { grid_index: index, point, valid, max_failures, first_error });
    }
    let table = ResultTable { rows, grid };
    table.validate()?;
    Ok(table)
}

/// [`run_experiment`] on a dedicated pool of `threads` workers.
pub fn run_experiment_with_threads(cfg: &ExperimentConfig, threads: usize) -> Result<ResultTable> {
    cfg.validate(threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    pool.install(|| run_experiment(cfg))
}
