//! Reference estimators: EM-SBL, ARD as reweighted ℓ1, and the genie MMSE
//! estimator that knows the true hyperparameters.
//!
//! All of them share [`GramSystem`], which caches `G = ΦᵀΦ`, `B = ΦᵀY` and
//! `‖Y‖²` so that a posterior under `(γ, ξ)` costs one `L×L` Cholesky
//! factorization of `C = ξI + D G D` with `D = diag(√γ)`, whatever `N` is.

pub mod ard;
pub mod em;
pub mod lasso;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{FactorizeC, InverseC, UPLO};
use serde::{Deserialize, Serialize};

use crate::bounds::marginal_covariance;
use crate::error::{ensure_positive, invalid, Result};
use crate::io::matrix_rows;
use crate::linalg::{gram, symmetrize};
use crate::model::MeasurementEnsemble;

pub use ard::{ard_sbl, ArdOptions};
pub use em::{em_sbl, EmOptions};
pub use lasso::{weighted_l1_objective, weighted_l1_solve, LassoOptions};

/// Gaussian posterior of `x` (or of every column of `W`) under fixed
/// `(γ, ξ)`: `Σ = (ΦᵀΦ/ξ + diag(γ)⁻¹)⁻¹`, `μ = ΣΦᵀY/ξ`.
#[derive(Debug, Clone)]
pub struct PosteriorState {
    pub mean: Array2<f64>,
    pub covariance: Array2<f64>,
    pub gamma: Array1<f64>,
    pub xi: f64,
}

/// Output of an estimator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    #[serde(with = "matrix_rows")]
    pub x_hat: Array2<f64>,
    pub gamma_hat: Vec<f64>,
    pub xi_hat: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
}

/// Cached quantities of one `(Φ, Y)` pair.
#[derive(Debug, Clone)]
pub struct GramSystem<'a> {
    pub phi: &'a MeasurementEnsemble,
    pub y: ArrayView2<'a, f64>,
    pub g: Array2<f64>,
    pub b: Array2<f64>,
    pub y_norm_sq: f64,
}

/// Posterior quantities in Gram space.
#[derive(Debug)]
pub(crate) struct GramPosterior {
    /// `C⁻¹` for `C = ξI + DGD`.
    pub c_inv: Array2<f64>,
    pub mean: Array2<f64>,
    /// `Σ_ii / γ_i = ξ (C⁻¹)_ii`, well defined even for `γ_i = 0`.
    pub sigma_ratio: Array1<f64>,
    pub sigma_diag: Array1<f64>,
    /// `‖Y − ΦM‖²`.
    pub residual_sq: f64,
    /// `Σ_m ln p(y_m; γ, ξ)` up to the `−(NM/2) ln 2π` constant.
    pub log_likelihood: f64,
}

impl<'a> GramSystem<'a> {
    pub fn new(phi: &'a MeasurementEnsemble, y: ArrayView2<'a, f64>) -> Result<Self> {
        if y.nrows() != phi.n_obs() {
            return Err(invalid(format!(
                "observations have {} rows but phi has {}",
                y.nrows(),
                phi.n_obs()
            )));
        }
        if y.ncols() == 0 {
            return Err(invalid("observations have no columns"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(invalid("observations contain non-finite values"));
        }
        let g = gram(phi.entries().view());
        let b = phi.entries().t().dot(&y);
        let y_norm_sq = y.iter().map(|v| v * v).sum();
        Ok(Self { phi, y, g, b, y_norm_sq })
    }

    pub fn n_obs(&self) -> usize {
        self.phi.n_obs()
    }

    pub fn dim(&self) -> usize {
        self.phi.dim()
    }

    pub fn n_vectors(&self) -> usize {
        self.y.ncols()
    }

    /// `C = ξI + D G D`.
    pub(crate) fn c_matrix(&self, d: &Array1<f64>, xi: f64) -> Array2<f64> {
        let mut c = &self.g * &d.view().insert_axis(Axis(0)) * &d.view().insert_axis(Axis(1));
        for i in 0..c.nrows() {
            c[[i, i]] += xi;
        }
        symmetrize(&mut c);
        c
    }

    pub(crate) fn posterior(&self, gamma: &Array1<f64>, xi: f64) -> Result<GramPosterior> {
        let (n, l, m) = (self.n_obs(), self.dim(), self.n_vectors());
        let d = gamma.mapv(f64::sqrt);
        let c = self.c_matrix(&d, xi);
        let factor = c.factorizec(UPLO::Lower)?;
        let mut c_inv = factor.invc()?;
        symmetrize(&mut c_inv);
        let ln_det_c = 2.0 * factor.factor.diag().iter().map(|v| v.ln()).sum::<f64>();
        // μ = D C⁻¹ D B
        let db = &self.b * &d.view().insert_axis(Axis(1));
        let mean = c_inv.dot(&db) * &d.view().insert_axis(Axis(1));
        let sigma_ratio = c_inv.diag().mapv(|v| xi * v);
        let sigma_diag = &sigma_ratio * gamma;
        let residual = &self.y - &self.phi.entries().dot(&mean);
        let residual_sq: f64 = residual.iter().map(|v| v * v).sum();
        // yᵀΣ_y⁻¹y = ‖y − Φμ‖²/ξ + μᵀΥ⁻¹μ, summed over columns.
        let mut prior_term = 0.0;
        for (i, row) in mean.outer_iter().enumerate() {
            if gamma[i] > 0.0 {
                prior_term += row.iter().map(|v| v * v).sum::<f64>() / gamma[i];
            }
        }
        let quad = residual_sq / xi + prior_term;
        let ln_det_sigma_y = (n as f64 - l as f64) * xi.ln() + ln_det_c;
        let log_likelihood = -0.5 * (m as f64 * ln_det_sigma_y + quad);
        Ok(GramPosterior { c_inv, mean, sigma_ratio, sigma_diag, residual_sq, log_likelihood })
    }

    /// Full posterior state, including the `L×L` covariance `ξ D C⁻¹ D`.
    pub fn posterior_state(&self, gamma: &Array1<f64>, xi: f64) -> Result<PosteriorState> {
        check_gamma(self.phi, gamma, true)?;
        ensure_positive("noise variance", xi)?;
        let post = self.posterior(gamma, xi)?;
        let d = gamma.mapv(f64::sqrt);
        let covariance =
            &post.c_inv * &d.view().insert_axis(Axis(0)) * &d.view().insert_axis(Axis(1)) * xi;
        Ok(PosteriorState { mean: post.mean, covariance, gamma: gamma.clone(), xi })
    }
}

pub(crate) fn check_gamma(phi: &MeasurementEnsemble, gamma: &Array1<f64>, allow_zero: bool) -> Result<()> {
    if gamma.len() != phi.dim() {
        return Err(invalid(format!(
            "gamma has length {} but phi has {} columns",
            gamma.len(),
            phi.dim()
        )));
    }
    for &g in gamma {
        let ok = g.is_finite() && (g > 0.0 || (allow_zero && g == 0.0));
        if !ok {
            return Err(invalid(format!("invalid hyperparameter {g}")));
        }
    }
    Ok(())
}

/// `Σ_m −½(ln|Σ_y| + y_mᵀΣ_y⁻¹y_m)`, the log marginal likelihood without
/// its `2π` constant. Uses an `N×N` factorization when `N ≤ L` and the
/// Gram-space form otherwise.
pub fn marginal_log_likelihood(
    y: &Array2<f64>,
    phi: &MeasurementEnsemble,
    gamma: &Array1<f64>,
    xi: f64,
) -> Result<f64> {
    ensure_positive("noise variance", xi)?;
    check_gamma(phi, gamma, true)?;
    if y.nrows() != phi.n_obs() {
        return Err(invalid("observation rows do not match phi"));
    }
    if phi.n_obs() <= phi.dim() {
        let cov = marginal_covariance(phi, gamma, xi)?;
        Ok(-0.5 * (y.ncols() as f64 * cov.ln_det() + cov.quad_form(y)?))
    } else {
        Ok(GramSystem::new(phi, y.view())?.posterior(gamma, xi)?.log_likelihood)
    }
}

/// Posterior mean `ΥΦᵀΣ_y⁻¹Y` under the true hyperparameters.
pub fn mmse_oracle(
    y: &Array2<f64>,
    phi: &MeasurementEnsemble,
    gamma_true: &Array1<f64>,
    xi: f64,
) -> Result<Array2<f64>> {
    ensure_positive("noise variance", xi)?;
    check_gamma(phi, gamma_true, true)?;
    if y.nrows() != phi.n_obs() {
        return Err(invalid("observation rows do not match phi"));
    }
    if phi.n_obs() <= phi.dim() {
        let cov = marginal_covariance(phi, gamma_true, xi)?;
        let s = cov.solve(y)?;
        Ok(phi.entries().t().dot(&s) * &gamma_true.view().insert_axis(Axis(1)))
    } else {
        Ok(GramSystem::new(phi, y.view())?.posterior(gamma_true, xi)?.mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_measurement_matrix;
    use approx::assert_relative_eq;
    use ndarray::array;
    use ndarray_linalg::InverseC;

    #[test]
    fn log_likelihood_trivial_and_scalar() {
        let zero = MeasurementEnsemble::new(Array2::zeros((3, 2))).unwrap();
        let v = marginal_log_likelihood(&Array2::zeros((3, 1)), &zero, &array![2.0, 5.0], 1.0).unwrap();
        assert_eq!(v, 0.0);
        let one = MeasurementEnsemble::new(array![[1.0]]).unwrap();
        let v = marginal_log_likelihood(&array![[2.0]], &one, &array![1.0], 1.0).unwrap();
        assert_relative_eq!(v, -0.5 * 2f64.ln() - 1.0, epsilon = 1e-14);
    }

    #[test]
    fn log_likelihood_routes_agree() {
        let phi = sample_measurement_matrix(9, 4, 3).unwrap();
        let y = Array2::from_shape_fn((9, 2), |(i, j)| (i as f64 * 0.7 - j as f64).sin());
        let gamma = array![0.5, 0.0, 2.0, 1e-3];
        let direct = {
            let cov = marginal_covariance(&phi, &gamma, 0.3).unwrap();
            -0.5 * (2.0 * cov.ln_det() + cov.quad_form(&y).unwrap())
        };
        let via_gram = marginal_log_likelihood(&y, &phi, &gamma, 0.3).unwrap();
        assert_relative_eq!(direct, via_gram, max_relative = 1e-12);
    }

    #[test]
    fn log_likelihood_permutation_invariant() {
        let phi = sample_measurement_matrix(4, 3, 8).unwrap();
        let y = array![[1.0], [-0.5], [0.25], [2.0]];
        let gamma = array![0.5, 1.5, 3.0];
        let a = marginal_log_likelihood(&y, &phi, &gamma, 0.7).unwrap();
        let mut perm = phi.entries().clone();
        for r in 0..4 {
            perm[[r, 0]] = phi.entries()[[r, 2]];
            perm[[r, 2]] = phi.entries()[[r, 0]];
        }
        let b = marginal_log_likelihood(
            &y,
            &MeasurementEnsemble::new(perm).unwrap(),
            &array![3.0, 1.5, 0.5],
            0.7,
        )
        .unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-13);
    }

    #[test]
    fn mmse_values() {
        let one = MeasurementEnsemble::new(array![[1.0]]).unwrap();
        assert_relative_eq!(mmse_oracle(&array![[2.0]], &one, &array![1.0], 1.0).unwrap()[[0, 0]], 1.0);
        let phi = sample_measurement_matrix(6, 3, 1).unwrap();
        let y = Array2::from_elem((6, 1), 1.0);
        assert!(mmse_oracle(&y, &phi, &Array1::zeros(3), 1.0).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn posterior_state_identities() {
        let phi = sample_measurement_matrix(5, 7, 2).unwrap();
        let y = Array2::from_shape_fn((5, 1), |(i, _)| i as f64 - 2.0);
        let gamma = array![0.5, 1.0, 2.0, 0.1, 3.0, 0.7, 1.3];
        let xi = 0.4;
        let sys = GramSystem::new(&phi, y.view()).unwrap();
        let st = sys.posterior_state(&gamma, xi).unwrap();
        let mut prec = sys.g.clone() / xi;
        for i in 0..7 {
            prec[[i, i]] += 1.0 / gamma[i];
        }
        let sigma = prec.invc().unwrap();
        for (a, b) in st.covariance.iter().zip(sigma.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
        let mu = sigma.dot(&sys.b) / xi;
        for (a, b) in st.mean.iter().zip(mu.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
