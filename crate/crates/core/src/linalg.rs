//! Dense symmetric helpers shared by the bound and estimator modules.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{Eigh, EigValsh, InverseC, UPLO};

use crate::error::{Result, SblError};

/// Condition number above which an information matrix is reported as
/// near-singular and inverted through thresholded eigenvalues.
pub const CONDITION_LIMIT: f64 = 1e12;

/// `ΦᵀΦ`.
pub fn gram(phi: ArrayView2<'_, f64>) -> Array2<f64> {
    phi.t().dot(&phi)
}

/// Replaces `m` by `(m + mᵀ)/2`.
pub fn symmetrize(m: &mut Array2<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
}

/// Result of inverting a symmetric positive (semi)definite matrix.
#[derive(Debug, Clone)]
pub struct SymInverse {
    pub inverse: Array2<f64>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub condition_number: f64,
    /// True when the inverse is a thresholded pseudo-inverse.
    pub pseudo_inverse: bool,
}

/// Inverts a symmetric matrix. Well-conditioned input goes through a
/// Cholesky inverse; anything with condition number above
/// [`CONDITION_LIMIT`] (or a non-positive eigenvalue) falls back to an
/// eigendecomposition with reciprocals of eigenvalues below
/// `max_eig / CONDITION_LIMIT` set to zero.
pub fn invert_symmetric(m: &Array2<f64>) -> Result<SymInverse> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(SblError::InvalidArgument("matrix is not square".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(SblError::NumericalFailure("matrix has non-finite entries".into()));
    }
    // Also covers 1×1 input, whose degenerate strides LAPACK bindings reject.
    let is_diagonal = m.indexed_iter().all(|((i, j), &v)| i == j || v == 0.0);
    if is_diagonal {
        return Ok(invert_diagonal(m));
    }
    let mut sym = m.as_standard_layout().into_owned();
    symmetrize(&mut sym);
    let eigvals = sym.eigvalsh(UPLO::Lower)?;
    let max_eig = eigvals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_eig = eigvals.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if min_eig > 0.0 { max_eig / min_eig } else { f64::INFINITY };
    if condition <= CONDITION_LIMIT {
        if let Ok(mut inv) = sym.invc() {
            symmetrize(&mut inv);
            return Ok(SymInverse {
                inverse: inv,
                min_eigenvalue: min_eig,
                max_eigenvalue: max_eig,
                condition_number: condition,
                pseudo_inverse: false,
            });
        }
    }
    let (eigvals, eigvecs) = sym.eigh(UPLO::Lower)?;
    let cutoff = max_eig.abs() / CONDITION_LIMIT;
    let recip: Array1<f64> = eigvals.mapv(|e| if e > cutoff { 1.0 / e } else { 0.0 });
    let scaled = &eigvecs * &recip.insert_axis(Axis(0));
    let mut inv = scaled.dot(&eigvecs.t());
    symmetrize(&mut inv);
    Ok(SymInverse {
        inverse: inv,
        min_eigenvalue: min_eig,
        max_eigenvalue: max_eig,
        condition_number: condition,
        pseudo_inverse: true,
    })
}

/// Diagonal input: entrywise reciprocals, with the same thresholding as
/// the general path.
fn invert_diagonal(m: &Array2<f64>) -> SymInverse {
    let d = m.diag();
    let max_eig = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_eig = d.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if min_eig > 0.0 { max_eig / min_eig } else { f64::INFINITY };
    let pseudo = !(condition <= CONDITION_LIMIT);
    let cutoff = if pseudo { max_eig.abs() / CONDITION_LIMIT } else { 0.0 };
    let recip = d.mapv(|e| if e > cutoff { 1.0 / e } else { 0.0 });
    SymInverse {
        inverse: Array2::from_diag(&recip),
        min_eigenvalue: min_eig,
        max_eigenvalue: max_eig,
        condition_number: condition,
        pseudo_inverse: pseudo,
    }
}

/// `base ⊗ I_m`.
pub fn kron_identity(base: &Array2<f64>, m: usize) -> Array2<f64> {
    let (r, c) = base.dim();
    let mut out = Array2::zeros((r * m, c * m));
    for i in 0..r {
        for j in 0..c {
            let v = base[[i, j]];
            if v != 0.0 {
                for k in 0..m {
                    out[[i * m + k, j * m + k]] = v;
                }
            }
        }
    }
    out
}

/// Largest absolute entry of `a·b − I`, relative to `max(1, ‖a‖_max·‖b‖_max)`.
pub fn inverse_residual(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let prod = a.dot(b);
    let n = prod.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((prod[[i, j]] - target).abs());
        }
    }
    worst
}


extern "C" {
    fn openblas_set_num_threads(num_threads: std::os::raw::c_int);
}

/// Caps the threads OpenBLAS may spawn inside one call. Experiments
/// parallelize over trials, so each BLAS call should stay on its worker.
pub fn set_blas_threads(threads: usize) {
    let n = threads.clamp(1, i32::MAX as usize) as std::os::raw::c_int;
    // SAFETY: plain setter exported by the linked OpenBLAS; it takes an int
    // by value and touches only library-global state.
    unsafe { openblas_set_num_threads(n) }
}
