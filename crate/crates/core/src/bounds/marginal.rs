//! The marginal observation covariance `Σ_y = ξI + Φ diag(γ) Φᵀ` and the
//! projections of it that every marginalized bound needs.

use ndarray::{Array1, Array2, Axis};
use ndarray_linalg::{Cholesky, Diag, Eigh, InverseC, SolveTriangular, UPLO};

use crate::error::{ensure_positive, invalid, Result, SblError};
use crate::linalg::{gram, symmetrize};
use crate::model::MeasurementEnsemble;

/// `Σ_y` together with its lower Cholesky factor.
#[derive(Debug, Clone)]
pub struct MarginalCovariance {
    pub matrix: Array2<f64>,
    pub cholesky_factor: Array2<f64>,
}

fn check_gamma(phi: &MeasurementEnsemble, gamma: &Array1<f64>) -> Result<()> {
    if gamma.len() != phi.dim() {
        return Err(invalid(format!(
            "gamma has length {} but phi has {} columns",
            gamma.len(),
            phi.dim()
        )));
    }
    if let Some(bad) = gamma.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
        return Err(invalid(format!("hyperparameters must be >= 0, found {bad}")));
    }
    Ok(())
}

/// Assembles and factors `Σ_y = ξI + Φ diag(γ) Φᵀ`.
pub fn marginal_covariance(
    phi: &MeasurementEnsemble,
    gamma: &Array1<f64>,
    xi: f64,
) -> Result<MarginalCovariance> {
    ensure_positive("noise variance", xi)?;
    check_gamma(phi, gamma)?;
    let a = phi.entries();
    let scaled = a * &gamma.view().insert_axis(Axis(0));
    let mut matrix = scaled.dot(&a.t());
    symmetrize(&mut matrix);
    for i in 0..matrix.nrows() {
        matrix[[i, i]] += xi;
    }
    let cholesky_factor = matrix
        .cholesky(UPLO::Lower)
        .map_err(|e| SblError::NumericalFailure(format!("Σ_y factorization failed: {e}")))?;
    Ok(MarginalCovariance { matrix, cholesky_factor })
}

impl MarginalCovariance {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ln_det(&self) -> f64 {
        2.0 * self.cholesky_factor.diag().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// `L⁻¹ B` for the lower factor `L`.
    pub fn whiten(&self, rhs: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.cholesky_factor.solve_triangular(UPLO::Lower, Diag::NonUnit, rhs)?)
    }

    /// `Σ_y⁻¹ B`.
    pub fn solve(&self, rhs: &Array2<f64>) -> Result<Array2<f64>> {
        let z = self.whiten(rhs)?;
        Ok(self.cholesky_factor.t().solve_triangular(UPLO::Upper, Diag::NonUnit, &z)?)
    }

    pub fn inverse(&self) -> Result<Array2<f64>> {
        let mut inv = self.matrix.invc()?;
        symmetrize(&mut inv);
        Ok(inv)
    }

    /// `yᵀ Σ_y⁻¹ y` summed over the columns of `y`.
    pub fn quad_form(&self, y: &Array2<f64>) -> Result<f64> {
        let z = self.whiten(y)?;
        Ok(z.iter().map(|v| v * v).sum())
    }
}

/// `P = ΦᵀΣ_y⁻¹Φ`, `Q = ΦᵀΣ_y⁻²Φ` and `Tr(Σ_y⁻²)`.
#[derive(Debug, Clone)]
pub struct MarginalProjections {
    pub p: Array2<f64>,
    pub q: Array2<f64>,
    pub trace_inv_sq: f64,
}

impl MarginalProjections {
    /// Works in whichever of the N×N or L×L spaces is smaller. When
    /// `N > L` the Woodbury form with `C = ξI + D G D`, `D = diag(√γ)`,
    /// `G = ΦᵀΦ` avoids forming the N×N covariance.
    pub fn compute(phi: &MeasurementEnsemble, gamma: &Array1<f64>, xi: f64) -> Result<Self> {
        ensure_positive("noise variance", xi)?;
        check_gamma(phi, gamma)?;
        if phi.n_obs() > phi.dim() {
            Self::via_gram(phi, gamma, xi)
        } else {
            Self::via_covariance(phi, gamma, xi)
        }
    }

    pub fn via_covariance(phi: &MeasurementEnsemble, gamma: &Array1<f64>, xi: f64) -> Result<Self> {
        let cov = marginal_covariance(phi, gamma, xi)?;
        let s_phi = cov.solve(phi.entries())?;
        let mut p = phi.entries().t().dot(&s_phi);
        symmetrize(&mut p);
        let mut q = s_phi.t().dot(&s_phi);
        symmetrize(&mut q);
        let inv = cov.inverse()?;
        let trace_inv_sq = inv.iter().map(|v| v * v).sum();
        Ok(Self { p, q, trace_inv_sq })
    }

    pub fn via_gram(phi: &MeasurementEnsemble, gamma: &Array1<f64>, xi: f64) -> Result<Self> {
        let (n, l) = (phi.n_obs(), phi.dim());
        if n < l {
            return Err(invalid("Gram-space projections need N >= L"));
        }
        let g = gram(phi.entries().view());
        let d = gamma.mapv(f64::sqrt);
        let dgd = &g * &d.view().insert_axis(Axis(0)) * &d.view().insert_axis(Axis(1));
        let mut c = dgd.clone();
        for i in 0..l {
            c[[i, i]] += xi;
        }
        let mut c_inv = c.invc()?;
        symmetrize(&mut c_inv);
        // R = I − D C⁻¹ D G
        let dcd = &c_inv * &d.view().insert_axis(Axis(0)) * &d.view().insert_axis(Axis(1));
        let mut r = -dcd.dot(&g);
        for i in 0..l {
            r[[i, i]] += 1.0;
        }
        let mut p = g.dot(&r) / xi;
        symmetrize(&mut p);
        let mut q = r.t().dot(&g).dot(&r) / (xi * xi);
        symmetrize(&mut q);
        let (mu, _) = dgd.eigh(UPLO::Lower)?;
        let trace_inv_sq = (n - l) as f64 / (xi * xi)
            + mu.iter().map(|m| 1.0 / (xi + m.max(0.0)).powi(2)).sum::<f64>();
        Ok(Self { p, q, trace_inv_sq })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_measurement_matrix;
    use ndarray::array;

    #[test]
    fn zero_matrix_gives_scaled_identity() {
        let phi = MeasurementEnsemble::new(Array2::zeros((3, 2))).unwrap();
        let cov = marginal_covariance(&phi, &array![1.0, 2.0], 0.7).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 0.7 } else { 0.0 };
                assert_eq!(cov.matrix[[i, j]], e);
            }
        }
        let phi = sample_measurement_matrix(3, 2, 1).unwrap();
        let cov = marginal_covariance(&phi, &Array1::zeros(2), 0.7).unwrap();
        assert!((cov.ln_det() - 3.0 * 0.7f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn orthogonal_columns_eigenvalues() {
        // Columns of a 4×4 Hadamard matrix: ΦᵀΦ = 4I. Take L = 2.
        let phi = MeasurementEnsemble::new(array![
            [1.0, 1.0],
            [1.0, -1.0],
            [1.0, 1.0],
            [1.0, -1.0]
        ])
        .unwrap();
        let (xi, g0) = (0.3, 1.7);
        let cov = marginal_covariance(&phi, &Array1::from_elem(2, g0), xi).unwrap();
        let (mut eig, _) = cov.matrix.eigh(UPLO::Lower).unwrap();
        eig.as_slice_mut().unwrap().sort_by(f64::total_cmp);
        let expected = [xi, xi, xi + 4.0 * g0, xi + 4.0 * g0];
        for (a, b) in eig.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let phi = sample_measurement_matrix(3, 2, 1).unwrap();
        assert!(marginal_covariance(&phi, &array![1.0, 1.0], 0.0).is_err());
        assert!(marginal_covariance(&phi, &array![1.0, -1.0], 1.0).is_err());
        assert!(marginal_covariance(&phi, &array![1.0], 1.0).is_err());
    }

    #[test]
    fn gram_and_covariance_routes_agree() {
        let phi = sample_measurement_matrix(12, 4, 3).unwrap();
        let gamma = array![0.5, 2.0, 0.0, 1.3];
        let a = MarginalProjections::via_covariance(&phi, &gamma, 0.4).unwrap();
        let b = MarginalProjections::via_gram(&phi, &gamma, 0.4).unwrap();
        for (x, y) in a.p.iter().zip(b.p.iter()) {
            assert!((x - y).abs() < 1e-10 * (1.0 + x.abs()));
        }
        for (x, y) in a.q.iter().zip(b.q.iter()) {
            assert!((x - y).abs() < 1e-10 * (1.0 + x.abs()));
        }
        assert!((a.trace_inv_sq - b.trace_inv_sq).abs() < 1e-10 * a.trace_inv_sq);
    }
}
