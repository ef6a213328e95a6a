//! The oracle verification suite behind `crb-sbl verify`.
//!
//! Every closed-form op of [`crate::bounds`] gets one entry comparing its
//! FIM with an independent numerical estimate: Monte-Carlo score outer
//! products for the likelihood terms, quadrature for prior expectations.
//! The suite adds the zero-mean-score regularity checks, the IG kernel
//! examples and finite-difference curvature checks of the priors.
//!
//! The closed forms are read through the [`ClosedForms`] trait so a
//! deliberately wrong implementation can be checked to fail.

use std::str::FromStr;

use ndarray::{array, s, Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::bounds::{self, GammaModel, MmvCase, MmvInputs};
use crate::error::{invalid, Result, SblError};
use crate::linalg::gram;
use crate::model::{sample_measurement_matrix, GcpPrior, MeasurementEnsemble, StudentTPrior};
use crate::oracle::quad::gcp_fisher_quadrature;
use crate::oracle::{
    fd_hessian_gcp, mc_hybrid_fim, mc_marginal_fim, quad_expectation_ig, quad_ig_expectation_value, regularity_check,
    IgIntegrand, McMatrix, OracleReport, QUAD_TOLERANCE,
};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifyLevel {
    /// Quadrature checks and Monte-Carlo checks at `4·10⁴` samples.
    Quick,
    /// Every check at `10⁵` samples, on an extra larger instance.
    Full,
}

impl VerifyLevel {
    pub fn mc_samples(&self) -> usize {
        match self {
            VerifyLevel::Quick => 40_000,
            VerifyLevel::Full => 100_000,
        }
    }
}

impl FromStr for VerifyLevel {
    type Err = SblError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(VerifyLevel::Quick),
            "full" => Ok(VerifyLevel::Full),
            other => Err(invalid(format!("unknown verify level `{other}` (expected quick or full)"))),
        }
    }
}

/// Closed-form FIMs under test. The defaults call [`crate::bounds`].
pub trait ClosedForms: Sync {
    fn hcrb_smv(&self, phi: &MeasurementEnsemble, xi: f64, gamma: &Array1<f64>) -> Result<Array2<f64>> {
        Ok(bounds::hcrb_smv(phi, xi, gamma)?.fim)
    }
    fn bcrb_smv(&self, phi: &MeasurementEnsemble, xi: f64, nu: f64, lambda: f64) -> Result<Array2<f64>> {
        Ok(bounds::bcrb_smv(phi, xi, nu, lambda)?.fim)
    }
    fn mcrb_gamma(&self, phi: &MeasurementEnsemble, xi: f64, gamma: &Array1<f64>) -> Result<Array2<f64>> {
        Ok(bounds::mcrb_gamma(phi, xi, gamma)?.fim)
    }
    fn mcrb_gamma_orthogonal(&self, n_obs: usize, xi: f64, gamma: &Array1<f64>) -> Result<Array2<f64>> {
        Ok(bounds::mcrb_gamma_orthogonal(n_obs, xi, gamma)?.fim)
    }
    fn mcrb_x_student_t(&self, phi: &MeasurementEnsemble, xi: f64, nu: f64, lambda: f64) -> Result<Array2<f64>> {
        Ok(bounds::mcrb_x_student_t(phi, xi, nu, lambda)?.fim)
    }
    fn gcp_fisher_term(&self, prior: &GcpPrior) -> Result<f64> {
        bounds::gcp_fisher_term(prior)
    }
    fn mcrb_x_gcp(&self, phi: &MeasurementEnsemble, xi: f64, prior: &GcpPrior) -> Result<Array2<f64>> {
        Ok(bounds::mcrb_x_gcp(phi, xi, prior)?.fim)
    }
    fn hcrb_unknown_noise(&self, phi: &MeasurementEnsemble, xi: f64, model: &GammaModel) -> Result<Array2<f64>> {
        Ok(bounds::hcrb_unknown_noise(phi, xi, model)?.fim)
    }
    fn bcrb_unknown_noise(&self, phi: &MeasurementEnsemble, model: &GammaModel, c: f64, d: f64) -> Result<Array2<f64>> {
        Ok(bounds::bcrb_unknown_noise(phi, model, c, d)?.fim)
    }
    fn mcrb_gamma_xi(&self, phi: &MeasurementEnsemble, xi: f64, gamma: &Array1<f64>) -> Result<Array2<f64>> {
        Ok(bounds::mcrb_gamma_xi(phi, xi, gamma)?.fim)
    }
    /// Factored FIM of one MMV case (one Kronecker copy for the `W` blocks).
    fn mmv_bounds(&self, case: MmvCase, inputs: &MmvInputs<'_>, m: usize) -> Result<Array2<f64>> {
        Ok(bounds::mmv_bounds(case, inputs, m)?.fim)
    }
}

/// The closed forms shipped in [`crate::bounds`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ShippedClosedForms;

impl ClosedForms for ShippedClosedForms {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyError {
    pub target: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub level: VerifyLevel,
    pub pass: bool,
    pub mc_samples: usize,
    pub seed: u64,
    pub entries: Vec<OracleReport>,
    /// Checks that could not be evaluated; each one fails the suite.
    pub errors: Vec<VerifyError>,
}

impl VerifyReport {
    pub fn entry(&self, target: &str) -> Option<&OracleReport> {
        self.entries.iter().find(|e| e.target == target)
    }

    pub fn failed(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.entries.iter().filter(|e| !e.pass).map(|e| e.target.as_str()).collect();
        out.extend(self.errors.iter().map(|e| e.target.as_str()));
        out
    }
}

/// Names of the closed-form entries, one per op of [`crate::bounds`].
pub const CLOSED_FORM_TARGETS: [&str; 11] = [
    "hcrb_smv",
    "bcrb_smv",
    "mcrb_gamma",
    "mcrb_gamma_orthogonal",
    "mcrb_x_student_t",
    "gcp_fisher_term",
    "mcrb_x_gcp",
    "hcrb_unknown_noise",
    "bcrb_unknown_noise",
    "mcrb_gamma_xi",
    "mmv_bounds",
];

/// Test instance of the suite: `Φ` with `(γ, ξ)` and the prior parameters.
struct Instance {
    phi: MeasurementEnsemble,
    gamma: Array1<f64>,
    xi: f64,
    nu: f64,
    lambda: f64,
    c: f64,
    d: f64,
}

impl Instance {
    fn new(n: usize, l: usize, seed: u64) -> Result<Self> {
        let gamma = Array1::from_shape_fn(l, |i| 0.5 + 0.75 * i as f64);
        Ok(Self {
            phi: sample_measurement_matrix(n, l, seed)?,
            gamma,
            xi: 0.8,
            nu: 5.0,
            lambda: 1.5,
            c: 4.0,
            d: 2.0,
        })
    }

    fn label(&self) -> String {
        format!("n{}_l{}", self.phi.n_obs(), self.phi.dim())
    }

    fn inputs(&self) -> MmvInputs<'_> {
        MmvInputs {
            phi: &self.phi,
            xi: Some(self.xi),
            gamma: Some(&self.gamma),
            nu: Some(self.nu),
            lambda: Some(self.lambda),
            c: Some(self.c),
            d: Some(self.d),
        }
    }
}

/// Quadrature value of `E[integrand]` under `IG(shape, rate)`.
fn ig_quad(shape: f64, rate: f64, integrand: IgIntegrand) -> Result<(f64, usize)> {
    let v = quad_ig_expectation_value(shape, rate, integrand)?;
    Ok((v.value, v.evaluations()))
}

/// `gram(Φ)·data_scale + prior·I`.
fn data_plus_identity(phi: &MeasurementEnsemble, data_scale: f64, prior: f64) -> Array2<f64> {
    let mut m = gram(phi.entries().view()) * data_scale;
    m.diag_mut().mapv_inplace(|v| v + prior);
    m
}

fn block_diag(parts: &[Array2<f64>]) -> Array2<f64> {
    let n: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = Array2::zeros((n, n));
    let mut at = 0;
    for p in parts {
        let k = p.nrows();
        out.slice_mut(s![at..at + k, at..at + k]).assign(p);
        at += k;
    }
    out
}

fn mc_report(target: &str, closed: &Array2<f64>, est: &McMatrix, blocks: &[usize]) -> OracleReport {
    OracleReport::mc_blocks(target, closed, est, blocks)
}

fn quad_report(target: &str, closed: &Array2<f64>, est: &Array2<f64>, nodes: usize) -> OracleReport {
    OracleReport::matrix(target, closed, est, None, nodes, QUAD_TOLERANCE)
}

struct Suite<'a> {
    forms: &'a dyn ClosedForms,
    samples: usize,
    seed: u64,
    entries: Vec<OracleReport>,
    errors: Vec<VerifyError>,
}

impl Suite<'_> {
    fn record(&mut self, target: &str, r: Result<OracleReport>) {
        match r {
            Ok(rep) => self.entries.push(rep),
            Err(e) => self.errors.push(VerifyError { target: target.to_string(), message: e.to_string() }),
        }
    }

    fn seed(&self, tag: u64) -> u64 {
        derive_seed(self.seed, &[tag])
    }

    /// Closed-form entries for one instance. `suffix` is appended to the
    /// target names of every instance after the first.
    fn closed_form_entries(&mut self, inst: &Instance, suffix: &str) {
        let f = self.forms;
        let (l, n) = (inst.phi.dim(), inst.phi.n_obs());
        let name = |t: &str| format!("{t}{suffix}");
        let samples = self.samples;

        let hybrid = mc_hybrid_fim(&inst.phi, &inst.gamma, inst.xi, 1, samples, self.seed(1));
        let marginal = mc_marginal_fim(&inst.phi, &inst.gamma, inst.xi, 1, samples, self.seed(2));

        let r = hybrid.as_ref().map_err(clone_err).and_then(|mc| {
            Ok(mc_report(&name("hcrb_smv"), &f.hcrb_smv(&inst.phi, inst.xi, &inst.gamma)?, &mc.block(0, 2 * l), &[l, l]))
        });
        self.record(&name("hcrb_smv"), r);

        let r = hybrid.as_ref().map_err(clone_err).and_then(|mc| {
            let closed = f.hcrb_unknown_noise(&inst.phi, inst.xi, &GammaModel::Deterministic(inst.gamma.clone()))?;
            Ok(mc_report(&name("hcrb_unknown_noise"), &closed, mc, &[l, l, 1]))
        });
        self.record(&name("hcrb_unknown_noise"), r);

        let r = marginal.as_ref().map_err(clone_err).and_then(|mc| {
            Ok(mc_report(&name("mcrb_gamma"), &f.mcrb_gamma(&inst.phi, inst.xi, &inst.gamma)?, &mc.block(0, l), &[l]))
        });
        self.record(&name("mcrb_gamma"), r);

        let r = marginal.as_ref().map_err(clone_err).and_then(|mc| {
            Ok(mc_report(&name("mcrb_gamma_xi"), &f.mcrb_gamma_xi(&inst.phi, inst.xi, &inst.gamma)?, mc, &[l, 1]))
        });
        self.record(&name("mcrb_gamma_xi"), r);

        // Bayesian bounds: the data term is exact, the prior terms come
        // from quadrature of the IG curvature.
        let r = (|| {
            let hyper = StudentTPrior::new(inst.nu, inst.lambda)?.hyperprior();
            let (inv_gamma, n1) = ig_quad(hyper.shape, hyper.rate, IgIntegrand::Reciprocal)?;
            let (kernel, n2) = ig_quad(hyper.shape, hyper.rate, IgIntegrand::BcrbGammaKernel { m: 1 })?;
            let oracle = block_diag(&[
                data_plus_identity(&inst.phi, 1.0 / inst.xi, inv_gamma),
                Array2::from_diag_elem(l, kernel),
            ]);
            let closed = f.bcrb_smv(&inst.phi, inst.xi, inst.nu, inst.lambda)?;
            Ok(quad_report(&name("bcrb_smv"), &closed, &oracle, n1 + n2))
        })();
        self.record(&name("bcrb_smv"), r);

        let r = (|| {
            let hyper = StudentTPrior::new(inst.nu, inst.lambda)?.hyperprior();
            let (inv_gamma, n1) = ig_quad(hyper.shape, hyper.rate, IgIntegrand::Reciprocal)?;
            let (kernel, n2) = ig_quad(hyper.shape, hyper.rate, IgIntegrand::BcrbGammaKernel { m: 1 })?;
            let (inv_xi, n3) = ig_quad(inst.c, inst.d, IgIntegrand::Reciprocal)?;
            let (xi_kernel, n4) = ig_quad(inst.c, inst.d, IgIntegrand::BcrbXiKernel { n_obs: n })?;
            let oracle = block_diag(&[
                data_plus_identity(&inst.phi, inv_xi, inv_gamma),
                Array2::from_diag_elem(l, kernel),
                Array2::from_diag_elem(1, xi_kernel),
            ]);
            let model = GammaModel::Random { nu: inst.nu, lambda: inst.lambda };
            let closed = f.bcrb_unknown_noise(&inst.phi, &model, inst.c, inst.d)?;
            Ok(quad_report(&name("bcrb_unknown_noise"), &closed, &oracle, n1 + n2 + n3 + n4))
        })();
        self.record(&name("bcrb_unknown_noise"), r);

        let r = (|| {
            let prior = GcpPrior::new(2.0, inst.nu, inst.lambda)?;
            let (t, nodes) = gcp_fisher_quadrature(&prior)?;
            let oracle = data_plus_identity(&inst.phi, 1.0 / inst.xi, t);
            let closed = f.mcrb_x_student_t(&inst.phi, inst.xi, inst.nu, inst.lambda)?;
            Ok(quad_report(&name("mcrb_x_student_t"), &closed, &oracle, nodes))
        })();
        self.record(&name("mcrb_x_student_t"), r);

        let r = (|| {
            let prior = GcpPrior::new(1.0, inst.nu, inst.lambda)?;
            let (t, nodes) = gcp_fisher_quadrature(&prior)?;
            let oracle = data_plus_identity(&inst.phi, 1.0 / inst.xi, t);
            let closed = f.mcrb_x_gcp(&inst.phi, inst.xi, &prior)?;
            Ok(quad_report(&name("mcrb_x_gcp"), &closed, &oracle, nodes))
        })();
        self.record(&name("mcrb_x_gcp"), r);
    }

    fn orthogonal_entry(&mut self) {
        let target = "mcrb_gamma_orthogonal";
        let r = (|| {
            let phi = MeasurementEnsemble::new(array![[1.0, 1.0], [1.0, -1.0], [1.0, 1.0], [1.0, -1.0]])?;
            let gamma = array![0.4, 1.6];
            let xi = 0.6;
            let mc = mc_marginal_fim(&phi, &gamma, xi, 1, self.samples, self.seed(3))?;
            let closed = self.forms.mcrb_gamma_orthogonal(phi.n_obs(), xi, &gamma)?;
            Ok(mc_report(target, &closed, &mc.block(0, 2), &[1, 1]))
        })();
        self.record(target, r);
    }

    fn gcp_entries(&mut self) {
        for (k, &(tau, nu, lambda)) in [(0.75, 3.0, 2.0), (1.0, 4.0, 1.5), (1.5, 2.5, 0.7), (2.0, 5.0, 3.0)].iter().enumerate() {
            let target = if k == 0 { "gcp_fisher_term".to_string() } else { format!("gcp_fisher_term_{k}") };
            let r = (|| {
                let prior = GcpPrior::new(tau, nu, lambda)?;
                let (value, nodes) = gcp_fisher_quadrature(&prior)?;
                let closed = self.forms.gcp_fisher_term(&prior)?;
                Ok(OracleReport::scalar(target.clone(), closed, value, nodes, QUAD_TOLERANCE))
            })();
            self.record(&target, r);
        }
    }

    /// Every supported MMV case at `M = 3`, compared block by block against
    /// the Monte-Carlo and quadrature oracles. The marginalized bound on `W`
    /// has no closed form and is not part of the table.
    fn mmv_entry(&mut self, inst: &Instance) {
        const M: usize = 3;
        let target = "mmv_bounds";
        let r = (|| {
            let l = inst.phi.dim();
            let n = inst.phi.n_obs();
            let inputs = inst.inputs();
            let hybrid = mc_hybrid_fim(&inst.phi, &inst.gamma, inst.xi, M, self.samples, self.seed(4))?;
            let marginal = mc_marginal_fim(&inst.phi, &inst.gamma, inst.xi, M, self.samples, self.seed(5))?;
            let hyper = StudentTPrior::new(inst.nu, inst.lambda)?.hyperprior();
            let (inv_gamma, _) = ig_quad(hyper.shape, hyper.rate, IgIntegrand::Reciprocal)?;
            let (kernel, _) = ig_quad(hyper.shape, hyper.rate, IgIntegrand::BcrbGammaKernel { m: M })?;
            let (xi_kernel, _) = ig_quad(inst.c, inst.d, IgIntegrand::BcrbXiKernel { n_obs: M * n })?;

            let mut closed = Vec::new();
            let mut oracle = Vec::new();
            let mut push = |case: MmvCase, o: Array2<f64>| -> Result<()> {
                closed.push(self.forms.mmv_bounds(case, &inputs, M)?);
                oracle.push(o);
                Ok(())
            };
            push(MmvCase::HcrbW, hybrid.block(0, l).mean)?;
            push(MmvCase::HcrbGamma, hybrid.block(l, l).mean)?;
            push(MmvCase::HcrbXi, hybrid.block(2 * l, 1).mean)?;
            push(MmvCase::McrbGamma, marginal.block(0, l).mean)?;
            push(MmvCase::McrbGammaXi, marginal.mean.clone())?;
            push(MmvCase::BcrbW, data_plus_identity(&inst.phi, 1.0 / inst.xi, inv_gamma))?;
            push(MmvCase::BcrbGamma, Array2::from_diag_elem(l, kernel))?;
            push(MmvCase::BcrbXi, Array2::from_diag_elem(1, xi_kernel))?;
            // Relative Frobenius error over the stacked blocks, each block
            // normalized by its own closed form so no case dominates.
            let mut worst: f64 = 0.0;
            for (c, o) in closed.iter().zip(&oracle) {
                worst = worst.max(crate::oracle::frobenius_relative_error(c, o));
            }
            let mut report = OracleReport::matrix(
                target,
                &block_diag(&closed),
                &block_diag(&oracle),
                None,
                self.samples,
                crate::oracle::MC_TOLERANCE,
            );
            report.rel_error = worst;
            report.pass = worst <= report.tolerance;
            Ok(report)
        })();
        self.record(target, r);
    }

    fn regularity_entries(&mut self, count: usize) {
        for k in 0..count {
            let target = format!("regularity_{k}");
            let r = (|| {
                let (n, l) = [(4, 2), (8, 4), (6, 3), (10, 5), (16, 8)][k % 5];
                let phi = sample_measurement_matrix(n, l, self.seed(100 + k as u64))?;
                let gamma = Array1::from_shape_fn(l, |i| 0.3 + 0.9 * ((i + k) % 4) as f64);
                let xi = 0.2 + 0.3 * k as f64;
                let mut rep = regularity_check(&phi, &gamma, xi, self.samples, self.seed(200 + k as u64))?;
                rep.target = target.clone();
                Ok(rep)
            })();
            self.record(&target, r);
        }
    }

    fn kernel_entries(&mut self) {
        let checks: [(&str, f64, f64, IgIntegrand); 4] = [
            ("ig_reciprocal_moment", 2.5, 2.5 / 1.5, IgIntegrand::Reciprocal),
            ("bcrb_gamma_kernel", 2.5, 2.5 / 1.5, IgIntegrand::BcrbGammaKernel { m: 1 }),
            ("bcrb_xi_kernel", 3.0, 0.5, IgIntegrand::BcrbXiKernel { n_obs: 1500 }),
            ("bcrb_xi_kernel_small", 1.5, 2.0, IgIntegrand::BcrbXiKernel { n_obs: 4 }),
        ];
        for (target, a, b, integrand) in checks {
            let r = quad_expectation_ig(a, b, integrand).map(|mut rep| {
                rep.target = target.to_string();
                rep
            });
            self.record(target, r);
        }
    }

    /// Finite-difference curvature of GCP log densities against the
    /// analytic `−(ν+1)r x^{τ−2}(τ−1−u)/(1+u)²` with `u = r x^τ`,
    /// `r = λ/ν`.
    fn fd_entries(&mut self) {
        for (k, &(tau, nu, lambda, x)) in [(2.0, 3.0, 1.0, 0.7), (1.0, 2.5, 2.0, 1.3), (1.5, 4.0, 0.5, -2.0)].iter().enumerate() {
            let target = format!("fd_hessian_gcp_{k}");
            let r = (|| {
                let prior = GcpPrior::new(tau, nu, lambda)?;
                let fd = fd_hessian_gcp(&prior, x)?;
                let (rate, ax) = (lambda / nu, f64::abs(x));
                let u = rate * ax.powf(tau);
                let exact = -(nu + 1.0) * rate * ax.powf(tau - 2.0) * (tau - 1.0 - u) / ((1.0 + u) * (1.0 + u));
                Ok(OracleReport::scalar(target.clone(), exact, fd, 5, FD_TOLERANCE))
            })();
            self.record(&target, r);
        }
    }
}

fn clone_err(e: &SblError) -> SblError {
    SblError::NumericalFailure(e.to_string())
}

/// Relative tolerance of the finite-difference checks, whose rounding
/// error is about `ε|log p| / h²`.
pub const FD_TOLERANCE: f64 = 1e-5;

/// Default master seed of the suite.
pub const VERIFY_SEED: u64 = 20_240_601;

/// Runs the suite against `forms`. The report passes only when every entry
/// passes and no check errored.
pub fn verify_suite(level: VerifyLevel, forms: &dyn ClosedForms, seed: u64) -> VerifyReport {
    let mut suite = Suite { forms, samples: level.mc_samples(), seed, entries: Vec::new(), errors: Vec::new() };
    let instances = match level {
        VerifyLevel::Quick => vec![(4, 2)],
        VerifyLevel::Full => vec![(4, 2), (8, 4)],
    };
    for (k, &(n, l)) in instances.iter().enumerate() {
        match Instance::new(n, l, derive_seed(seed, &[10, k as u64])) {
            Ok(inst) => {
                let suffix = if k == 0 { String::new() } else { format!("_{}", inst.label()) };
                suite.closed_form_entries(&inst, &suffix);
                if k == 0 {
                    suite.mmv_entry(&inst);
                }
            }
            Err(e) => suite.errors.push(VerifyError { target: format!("instance_{k}"), message: e.to_string() }),
        }
    }
    suite.orthogonal_entry();
    suite.gcp_entries();
    suite.kernel_entries();
    suite.fd_entries();
    suite.regularity_entries(match level {
        VerifyLevel::Quick => 2,
        VerifyLevel::Full => 5,
    });
    let pass = suite.errors.is_empty() && suite.entries.iter().all(|e| e.pass);
    VerifyReport { level, pass, mc_samples: suite.samples, seed, entries: suite.entries, errors: suite.errors }
}
