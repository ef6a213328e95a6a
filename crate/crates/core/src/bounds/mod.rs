//! Closed-form Fisher information matrices and the Cramér-Rao type bounds
//! built from them.
//!
//! Every op returns a [`BoundReport`]: the labelled FIM, its inverse and a
//! few conditioning diagnostics. Hybrid and Bayesian bounds have zero
//! cross-blocks between `x`, `γ` and `ξ`; the marginalized bound on `(γ, ξ)`
//! is the only one with a coupled block.

pub mod marginal;
pub mod mmv;
mod report;

use ndarray::{s, Array1, Array2};
use statrs::function::gamma::ln_gamma;

use crate::error::{ensure_positive, invalid, Result, SblError};
use crate::linalg::gram;
use crate::model::{GcpPrior, MeasurementEnsemble};

pub use marginal::{marginal_covariance, MarginalCovariance, MarginalProjections};
pub use mmv::{mmv_bounds, MmvCase, MmvInputs};
pub use report::{Block, BlockSummary, BoundKind, BoundParams, BoundReport, BoundSummary, Target};

/// How `γ` enters a bound that also covers the noise variance.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaModel {
    /// `γ` is an unknown deterministic vector with the given value.
    Deterministic(Array1<f64>),
    /// `γ_i ~ IG(ν/2, ν/(2λ))` i.i.d.
    Random { nu: f64, lambda: f64 },
}

fn check_positive_gamma(phi: &MeasurementEnsemble, gamma: &Array1<f64>) -> Result<()> {
    if gamma.len() != phi.dim() {
        return Err(invalid(format!(
            "gamma has length {} but phi has {} columns",
            gamma.len(),
            phi.dim()
        )));
    }
    for &g in gamma {
        if !(g.is_finite() && g > 0.0) {
            return Err(invalid(format!(
                "hybrid bounds need strictly positive hyperparameters, found {g}"
            )));
        }
    }
    Ok(())
}

/// `ΦᵀΦ·scale + diag(prior)`.
fn data_plus_diag(phi: &MeasurementEnsemble, scale: f64, diag: impl Fn(usize) -> f64) -> Array2<f64> {
    let mut m = gram(phi.entries().view()) * scale;
    for i in 0..m.nrows() {
        m[[i, i]] += diag(i);
    }
    m
}

fn block_diagonal(parts: &[&Array2<f64>]) -> Array2<f64> {
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

fn scaled_identity(n: usize, v: f64) -> Array2<f64> {
    Array2::from_diag_elem(n, v)
}

/// FIM of the `γ` block of the hybrid bound: `diag(1/(2γ_i²))`.
fn hcrb_gamma_fim(gamma: &Array1<f64>) -> Array2<f64> {
    Array2::from_diag(&gamma.mapv(|g| 0.5 / (g * g)))
}

/// Per-coordinate Bayesian information on `γ_i` under `IG(ν/2, ν/(2λ))`
/// with `m` measurement vectors: `λ²(ν+2)(m+ν+6)/(2ν)`.
pub(crate) fn bcrb_gamma_entry(nu: f64, lambda: f64, m: usize) -> f64 {
    lambda * lambda * (nu + 2.0) * (m as f64 + nu + 6.0) / (2.0 * nu)
}

/// Bayesian information on `ξ ~ IG(c, d)` with `n_total` scalar
/// observations: `c(c+1)(n_total/2 + c + 3)/d²`.
pub(crate) fn bcrb_xi_entry(c: f64, d: f64, n_total: usize) -> f64 {
    c * (c + 1.0) * (0.5 * n_total as f64 + c + 3.0) / (d * d)
}

/// Hybrid bound with known noise: `x` random given deterministic `γ`.
///
/// x-block FIM `ΦᵀΦ/ξ + diag(γ)⁻¹`, γ-block FIM `diag(1/(2γ_i²))`.
pub fn hcrb_smv(phi: &MeasurementEnsemble, xi: f64, gamma: &Array1<f64>) -> Result<BoundReport> {
    ensure_positive("noise variance", xi)?;
    check_positive_gamma(phi, gamma)?;
    let l = phi.dim();
    let fx = data_plus_diag(phi, 1.0 / xi, |i| 1.0 / gamma[i]);
    let fg = hcrb_gamma_fim(gamma);
    BoundReport::new(
        BoundKind::Hcrb,
        "hcrb_smv",
        vec![Block { label: Target::X, dim: l }, Block { label: Target::Gamma, dim: l }],
        block_diagonal(&[&fx, &fg]),
        BoundParams { xi: Some(xi), ..Default::default() },
    )
}

/// Bayesian bound with known noise and `γ_i ~ IG(ν/2, ν/(2λ))`.
///
/// x-block FIM `ΦᵀΦ/ξ + λI`, γ-block FIM `λ²(ν+2)(ν+7)/(2ν)·I`.
pub fn bcrb_smv(phi: &MeasurementEnsemble, xi: f64, nu: f64, lambda: f64) -> Result<BoundReport> {
    ensure_positive("noise variance", xi)?;
    ensure_positive("nu", nu)?;
    ensure_positive("lambda", lambda)?;
    let l = phi.dim();
    let fx = data_plus_diag(phi, 1.0 / xi, |_| lambda);
    let fg = scaled_identity(l, bcrb_gamma_entry(nu, lambda, 1));
    BoundReport::new(
        BoundKind::Bcrb,
        "bcrb_smv",
        vec![Block { label: Target::X, dim: l }, Block { label: Target::Gamma, dim: l }],
        block_diagonal(&[&fx, &fg]),
        BoundParams { nu: Some(nu), lambda: Some(lambda), xi: Some(xi), ..Default::default() },
    )
}

/// `½ (ΦᵀΣ_y⁻¹Φ)∘(ΦᵀΣ_y⁻¹Φ)`, the information on `γ` once `x` is
/// marginalized out.
fn mcrb_gamma_fim(proj: &MarginalProjections) -> Array2<f64> {
    proj.p.mapv(|v| 0.5 * v * v)
}

/// Marginalized bound on `γ` (x integrated out): `M_ij = ½(Φ_jᵀΣ_y⁻¹Φ_i)²`.
///
/// Zero hyperparameters are allowed since `Σ_y` stays positive definite.
/// A singular FIM (for instance duplicated columns) is reported through the
/// pseudo-inverse flag rather than as an error.
pub fn mcrb_gamma(phi: &MeasurementEnsemble, xi: f64, gamma: &Array1<f64>) -> Result<BoundReport> {
    let proj = MarginalProjections::compute(phi, gamma, xi)?;
    BoundReport::new(
        BoundKind::Mcrb,
        "mcrb_gamma",
        vec![Block { label: Target::Gamma, dim: phi.dim() }],
        mcrb_gamma_fim(&proj),
        BoundParams { xi: Some(xi), ..Default::default() },
    )
}

/// [`mcrb_gamma`] for a ±1 ensemble with mutually orthogonal columns, where
/// `Φ_iᵀΣ_y⁻¹Φ_i = (ξ/N + γ_i)⁻¹` and the FIM is `diag(½(ξ/N + γ_i)⁻²)`.
/// The bound `2(ξ/N + γ_i)²` tends to the hybrid value `2γ_i²` as `N` grows.
pub fn mcrb_gamma_orthogonal(n_obs: usize, xi: f64, gamma: &Array1<f64>) -> Result<BoundReport> {
    ensure_positive("noise variance", xi)?;
    if n_obs == 0 {
        return Err(invalid("n_obs must be >= 1"));
    }
    if let Some(bad) = gamma.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
        return Err(invalid(format!("hyperparameters must be >= 0, found {bad}")));
    }
    let floor = xi / n_obs as f64;
    BoundReport::new(
        BoundKind::Mcrb,
        "mcrb_gamma_orthogonal",
        vec![Block { label: Target::Gamma, dim: gamma.len() }],
        Array2::from_diag(&gamma.mapv(|g| 0.5 / ((floor + g) * (floor + g)))),
        BoundParams { xi: Some(xi), n_obs: Some(n_obs), ..Default::default() },
    )
}

/// Marginalized bound on `x` under the Student-t prior (γ integrated out):
/// FIM `ΦᵀΦ/ξ + λ(ν+1)/(ν+3)·I`.
pub fn mcrb_x_student_t(phi: &MeasurementEnsemble, xi: f64, nu: f64, lambda: f64) -> Result<BoundReport> {
    ensure_positive("noise variance", xi)?;
    ensure_positive("nu", nu)?;
    ensure_positive("lambda", lambda)?;
    let t = lambda * (nu + 1.0) / (nu + 3.0);
    BoundReport::new(
        BoundKind::Mcrb,
        "mcrb_x_student_t",
        vec![Block { label: Target::X, dim: phi.dim() }],
        data_plus_diag(phi, 1.0 / xi, |_| t),
        BoundParams { nu: Some(nu), lambda: Some(lambda), xi: Some(xi), tau: Some(2.0), ..Default::default() },
    )
}

/// Prior Fisher information of one GCP coordinate:
///
/// `T_τ = τ²(ν+1)/(ν+τ+1) (λ/ν)^{2/τ} Γ((ν+2)/τ)Γ(2−1/τ) / (Γ(1/τ)Γ(ν/τ))`.
///
/// The expression needs `Γ(2 − 1/τ)` with a positive argument and a finite
/// information integral, so `τ ≤ 1/2` is rejected.
pub fn gcp_fisher_term(prior: &GcpPrior) -> Result<f64> {
    let GcpPrior { tau, nu, lambda, .. } = *prior;
    ensure_positive("tau", tau)?;
    ensure_positive("nu", nu)?;
    ensure_positive("lambda", lambda)?;
    if tau <= 0.5 {
        return Err(SblError::Domain(format!(
            "GCP Fisher information is infinite for tau = {tau} <= 1/2"
        )));
    }
    let ln = 2.0 * tau.ln() + (nu + 1.0).ln() - (nu + tau + 1.0).ln()
        + (2.0 / tau) * (lambda / nu).ln()
        + ln_gamma((nu + 2.0) / tau)
        + ln_gamma(2.0 - 1.0 / tau)
        - ln_gamma(1.0 / tau)
        - ln_gamma(nu / tau);
    Ok(ln.exp())
}

/// Marginalized bound on `x` under the GCP prior: FIM `ΦᵀΦ/ξ + T_τ·I`.
pub fn mcrb_x_gcp(phi: &MeasurementEnsemble, xi: f64, prior: &GcpPrior) -> Result<BoundReport> {
    ensure_positive("noise variance", xi)?;
    let t = gcp_fisher_term(prior)?;
    BoundReport::new(
        BoundKind::Mcrb,
        "mcrb_x_gcp",
        vec![Block { label: Target::X, dim: phi.dim() }],
        data_plus_diag(phi, 1.0 / xi, |_| t),
        BoundParams {
            nu: Some(prior.nu),
            lambda: Some(prior.lambda),
            tau: Some(prior.tau),
            xi: Some(xi),
            ..Default::default()
        },
    )
}

/// `(x, γ)` blocks for a noise-aware bound, with `x`'s data term scaled by
/// `inv_xi` (the true `1/ξ`, or `E[1/ξ]` when ξ is random).
fn theta_blocks(phi: &MeasurementEnsemble, inv_xi: f64, model: &GammaModel) -> Result<(Array2<f64>, Array2<f64>, BoundParams)> {
    match model {
        GammaModel::Deterministic(gamma) => {
            check_positive_gamma(phi, gamma)?;
            Ok((
                data_plus_diag(phi, inv_xi, |i| 1.0 / gamma[i]),
                hcrb_gamma_fim(gamma),
                BoundParams::default(),
            ))
        }
        &GammaModel::Random { nu, lambda } => {
            ensure_positive("nu", nu)?;
            ensure_positive("lambda", lambda)?;
            Ok((
                data_plus_diag(phi, inv_xi, |_| lambda),
                scaled_identity(phi.dim(), bcrb_gamma_entry(nu, lambda, 1)),
                BoundParams { nu: Some(nu), lambda: Some(lambda), ..Default::default() },
            ))
        }
    }
}

/// Bound with an unknown deterministic noise variance. The `(x, γ)` blocks
/// follow [`hcrb_smv`] or [`bcrb_smv`] depending on `model`; the ξ-block
/// FIM is `N/(2ξ²)` and decoupled from everything else.
pub fn hcrb_unknown_noise(phi: &MeasurementEnsemble, xi: f64, model: &GammaModel) -> Result<BoundReport> {
    ensure_positive("noise variance", xi)?;
    let (fx, fg, mut params) = theta_blocks(phi, 1.0 / xi, model)?;
    let fxi = scaled_identity(1, phi.n_obs() as f64 / (2.0 * xi * xi));
    params.xi = Some(xi);
    params.n_obs = Some(phi.n_obs());
    let l = phi.dim();
    BoundReport::new(
        BoundKind::Hcrb,
        "hcrb_unknown_noise",
        vec![
            Block { label: Target::X, dim: l },
            Block { label: Target::Gamma, dim: l },
            Block { label: Target::Xi, dim: 1 },
        ],
        block_diagonal(&[&fx, &fg, &fxi]),
        params,
    )
}

/// Bound with `ξ ~ IG(c, d)`. The ξ-block FIM is
/// `c(c+1)(N/2 + c + 3)/d²`; the x-block data term uses `E[1/ξ] = c/d`.
///
/// The non-informative limit `c, d → 0` makes the ξ-block indeterminate
/// and is rejected.
pub fn bcrb_unknown_noise(phi: &MeasurementEnsemble, model: &GammaModel, c: f64, d: f64) -> Result<BoundReport> {
    const INDETERMINATE: f64 = 1e-8;
    ensure_positive("c", c)?;
    ensure_positive("d", d)?;
    if c < INDETERMINATE || d < INDETERMINATE {
        return Err(SblError::Domain(format!(
            "noise hyperprior IG({c}, {d}) is in the non-informative limit; the bound is indeterminate"
        )));
    }
    let (fx, fg, mut params) = theta_blocks(phi, c / d, model)?;
    let fxi = scaled_identity(1, bcrb_xi_entry(c, d, phi.n_obs()));
    params.c = Some(c);
    params.d = Some(d);
    params.n_obs = Some(phi.n_obs());
    let l = phi.dim();
    BoundReport::new(
        BoundKind::Bcrb,
        "bcrb_unknown_noise",
        vec![
            Block { label: Target::X, dim: l },
            Block { label: Target::Gamma, dim: l },
            Block { label: Target::Xi, dim: 1 },
        ],
        block_diagonal(&[&fx, &fg, &fxi]),
        params,
    )
}

/// Joint `(γ, ξ)` FIM after marginalizing `x`, scaled by `copies`.
pub(crate) fn mcrb_gamma_xi_fim(proj: &MarginalProjections, copies: f64) -> Array2<f64> {
    let l = proj.p.nrows();
    let mut fim = Array2::zeros((l + 1, l + 1));
    fim.slice_mut(s![..l, ..l]).assign(&(mcrb_gamma_fim(proj) * copies));
    for i in 0..l {
        let v = 0.5 * copies * proj.q[[i, i]];
        fim[[i, l]] = v;
        fim[[l, i]] = v;
    }
    fim[[l, l]] = 0.5 * copies * proj.trace_inv_sq;
    fim
}

/// Marginalized bound on `(γ, ξ)`: γγ-block as in [`mcrb_gamma`],
/// ξξ-entry `½Tr(Σ_y⁻²)`, cross entries `½Φ_iᵀΣ_y⁻²Φ_i`.
pub fn mcrb_gamma_xi(phi: &MeasurementEnsemble, xi: f64, gamma: &Array1<f64>) -> Result<BoundReport> {
    let proj = MarginalProjections::compute(phi, gamma, xi)?;
    BoundReport::new(
        BoundKind::Mcrb,
        "mcrb_gamma_xi",
        vec![Block { label: Target::Gamma, dim: phi.dim() }, Block { label: Target::Xi, dim: 1 }],
        mcrb_gamma_xi_fim(&proj, 1.0),
        BoundParams { xi: Some(xi), n_obs: Some(phi.n_obs()), ..Default::default() },
    )
}
