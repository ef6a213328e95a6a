//! Automatic relevance determination written as a sequence of weighted ℓ1
//! problems.
//!
//! Each outer step sets `w_i = (Φ_iᵀ Σ_y⁻¹ Φ_i)^{1/2}` with
//! `Σ_y = ξI + Φ diag(γ) Φᵀ`, solves the weighted lasso for `x`, and
//! resets `γ_i = |x_i| / w_i`.

use ndarray::{Array1, Array2, Axis};
use ndarray_linalg::{Cholesky, Diag, SolveTriangular, UPLO};
use serde::{Deserialize, Serialize};

use super::lasso::{spectral_norm_estimate, LassoOptions, LassoProblem};
use super::{check_gamma, EstimateResult, GramSystem};
use crate::error::{ensure_positive, invalid, Result, SblError};
use crate::model::MeasurementEnsemble;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArdOptions {
    pub max_iter: usize,
    /// Stop once `max|Δx| / max|x|` falls below this.
    pub tol: f64,
    pub inner: LassoOptions,
    /// Starting hyperparameters; `None` means all ones.
    pub initial_gamma: Option<Vec<f64>>,
}

impl Default for ArdOptions {
    fn default() -> Self {
        Self { max_iter: 500, tol: 1e-6, inner: LassoOptions::default(), initial_gamma: None }
    }
}

/// Per-iteration quantities of ARD: the weights `w_i = (Φ_iᵀΣ_y⁻¹Φ_i)^{1/2}`
/// and the log marginal likelihood of the current `γ`.
pub(crate) struct ArdStep {
    pub weights: Array1<f64>,
    pub log_likelihood: f64,
}

/// Evaluates [`ArdStep`] on the active set `A = {i : γ_i > 0}` only, with
/// `C = ξI + D G_AA D` and `D = diag(√γ_A)`.
///
/// For active coordinates `Φ_iᵀΣ_y⁻¹Φ_i = (1 − ξ(C⁻¹)_ii)/γ_i`, accurate
/// while `ξ(C⁻¹)_ii` is well below one. The other coordinates use
/// `(G_ii − ‖R⁻¹DG_Ai‖²)/ξ` with `C = RRᵀ`.
pub(crate) fn ard_step(sys: &GramSystem<'_>, gamma: &Array1<f64>, xi: f64) -> Result<ArdStep> {
    let (n, l) = (sys.n_obs(), sys.dim());
    let active: Vec<usize> = (0..l).filter(|&i| gamma[i] > 0.0).collect();
    let k = active.len();
    let y = sys.y.column(0);
    let y_sq = sys.y_norm_sq;
    if k == 0 {
        return Ok(ArdStep {
            weights: sys.g.diag().mapv(|v| (v / xi).max(0.0).sqrt()),
            log_likelihood: -0.5 * (n as f64 * xi.ln() + y_sq / xi),
        });
    }
    let d = Array1::from_shape_fn(k, |a| gamma[active[a]].sqrt());
    let mut c = Array2::from_shape_fn((k, k), |(a, b)| d[a] * sys.g[[active[a], active[b]]] * d[b]);
    c.diag_mut().mapv_inplace(|v| v + xi);
    let r = c.cholesky(UPLO::Lower)?;
    let ln_det_c = 2.0 * r.diag().iter().map(|v| v.ln()).sum::<f64>();

    // μ_A = D C⁻¹ D b_A through two triangular solves.
    let v = Array1::from_shape_fn(k, |a| d[a] * sys.b[[active[a], 0]]);
    let half = r.solve_triangular(UPLO::Lower, Diag::NonUnit, &v.insert_axis(Axis(1)))?;
    let full = r.t().solve_triangular(UPLO::Upper, Diag::NonUnit, &half)?;
    let mean = &full.column(0) * &d;
    let mut residual = y.to_owned();
    for (a, &i) in active.iter().enumerate() {
        residual.scaled_add(-mean[a], &sys.phi.entries().column(i));
    }
    let prior: f64 = (0..k).map(|a| mean[a] * mean[a] / gamma[active[a]]).sum();
    let quad = residual.dot(&residual) / xi + prior;
    let log_likelihood = -0.5 * ((n as f64 - k as f64) * xi.ln() + ln_det_c + quad);

    let dg = Array2::from_shape_fn((k, l), |(a, i)| d[a] * sys.g[[active[a], i]]);
    let z = r.solve_triangular(UPLO::Lower, Diag::NonUnit, &dg)?;
    let r_inv = r.solve_triangular(UPLO::Lower, Diag::NonUnit, &Array2::eye(k))?;
    let mut weights = Array1::zeros(l);
    let mut slot = vec![usize::MAX; l];
    for (a, &i) in active.iter().enumerate() {
        slot[i] = a;
    }
    for i in 0..l {
        let ratio = if slot[i] == usize::MAX {
            1.0
        } else {
            let col = r_inv.column(slot[i]);
            xi * col.dot(&col)
        };
        let p = if ratio < 0.5 {
            (1.0 - ratio) / gamma[i]
        } else {
            let col = z.column(i);
            (sys.g[[i, i]] - col.dot(&col)) / xi
        };
        weights[i] = p.max(0.0).sqrt();
    }
    Ok(ArdStep { weights, log_likelihood })
}

/// Runs ARD with known noise variance `xi` on a single measurement vector
/// (`y` must have one column).
pub fn ard_sbl(y: &Array2<f64>, phi: &MeasurementEnsemble, xi: f64, opts: &ArdOptions) -> Result<EstimateResult> {
    ensure_positive("noise variance", xi)?;
    ensure_positive("tolerance", opts.tol)?;
    if opts.max_iter == 0 {
        return Err(invalid("max_iter must be >= 1"));
    }
    if y.ncols() != 1 {
        return Err(invalid("ARD runs on a single measurement vector"));
    }
    let sys = GramSystem::new(phi, y.view())?;
    let l = sys.dim();
    let mut gamma = match &opts.initial_gamma {
        Some(g) => {
            let g = Array1::from(g.clone());
            check_gamma(phi, &g, false)?;
            g
        }
        None => Array1::ones(l),
    };
    let y_col = y.column(0);
    let b_col = sys.b.column(0);
    let lasso = LassoProblem::new(phi.entries(), y_col, &sys.g, b_col, spectral_norm_estimate(&sys.g), xi);

    let mut x = Array1::zeros(l);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let step = ard_step(&sys, &gamma, xi)?;
        if !step.log_likelihood.is_finite() {
            return Err(SblError::Diverged { reason: "non-finite objective".into(), trace });
        }
        trace.push(step.log_likelihood);
        if converged || iterations == opts.max_iter {
            break;
        }
        let w = step.weights;
        let x_new = lasso.solve(&w, &x, &opts.inner)?;
        for i in 0..l {
            gamma[i] = if w[i] > 0.0 { x_new[i].abs() / w[i] } else { 0.0 };
        }
        let change = x.iter().zip(x_new.iter()).fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
        let size = x_new.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        x = x_new;
        iterations += 1;
        converged = change <= opts.tol * size;
    }
    Ok(EstimateResult {
        x_hat: x.insert_axis(Axis(1)),
        gamma_hat: gamma.to_vec(),
        xi_hat: None,
        iterations,
        converged,
        objective_trace: trace,
    })
}
