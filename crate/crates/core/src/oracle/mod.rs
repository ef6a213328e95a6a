//! Independent numerical checks of the closed forms in [`crate::bounds`]:
//! Monte-Carlo Fisher information from score outer products, adaptive
//! quadrature of prior expectations, finite-difference Hessians and the
//! zero-mean-score regularity condition.

pub(crate) mod quad;
pub(crate) mod score;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

pub use quad::{
    fd_hessian_gcp, fd_hessian_logprior, quad_expectation_ig, quad_gcp_fisher_term, quad_ig_expectation_value,
    IgIntegrand,
};
pub use score::{
    mc_fim, mc_fim_gamma, mc_hybrid_fim, mc_marginal_fim, regularity_check, regularity_check_misspecified,
    score_gamma_xi, McMatrix,
};

/// Relative tolerance for Monte-Carlo comparisons.
pub const MC_TOLERANCE: f64 = 0.05;
/// Relative tolerance for quadrature comparisons.
pub const QUAD_TOLERANCE: f64 = 1e-6;
/// Largest standardized deviation of a mean score accepted as zero.
pub const Z_TOLERANCE: f64 = 3.0;

/// A scalar, vector or matrix quantity in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OracleValue {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

impl OracleValue {
    pub fn matrix(m: &Array2<f64>) -> Self {
        OracleValue::Matrix(m.outer_iter().map(|r| r.to_vec()).collect())
    }

    pub fn vector(v: &Array1<f64>) -> Self {
        OracleValue::Vector(v.to_vec())
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            OracleValue::Scalar(v) => Some(*v),
            _ => None,
        }
    }
}

/// Outcome of one oracle comparison.
///
/// `pass` holds exactly when `rel_error <= tolerance`. For matrix targets
/// `rel_error` is the relative Frobenius error; for the regularity check
/// it is the largest `|mean| / standard error` over the score components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub target: String,
    pub closed_form: OracleValue,
    pub estimate: OracleValue,
    pub rel_error: f64,
    /// Monte-Carlo standard error, on the same scale as `rel_error`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    pub samples_or_nodes: usize,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    fn finish(
        target: impl Into<String>,
        closed_form: OracleValue,
        estimate: OracleValue,
        rel_error: f64,
        std_error: Option<f64>,
        samples_or_nodes: usize,
        tolerance: f64,
    ) -> Self {
        Self {
            target: target.into(),
            closed_form,
            estimate,
            rel_error,
            std_error,
            samples_or_nodes,
            tolerance,
            pass: rel_error <= tolerance,
        }
    }

    /// Scalar comparison `|estimate − closed| / |closed|` (absolute error
    /// when the closed form is zero).
    pub fn scalar(target: impl Into<String>, closed: f64, estimate: f64, nodes: usize, tolerance: f64) -> Self {
        let rel = relative_error(closed, estimate);
        Self::finish(target, OracleValue::Scalar(closed), OracleValue::Scalar(estimate), rel, None, nodes, tolerance)
    }

    /// Matrix comparison in relative Frobenius norm.
    pub fn matrix(
        target: impl Into<String>,
        closed: &Array2<f64>,
        estimate: &Array2<f64>,
        std_error: Option<f64>,
        samples_or_nodes: usize,
        tolerance: f64,
    ) -> Self {
        let rel = frobenius_relative_error(closed, estimate);
        Self::finish(
            target,
            OracleValue::matrix(closed),
            OracleValue::matrix(estimate),
            rel,
            std_error,
            samples_or_nodes,
            tolerance,
        )
    }

    /// Compares a Monte-Carlo matrix estimate with its closed form at the
    /// Monte-Carlo tolerance, reporting the standard error relative to the
    /// closed form's Frobenius norm.
    pub fn mc_matrix(target: impl Into<String>, closed: &Array2<f64>, estimate: &McMatrix) -> Self {
        let norm = closed.iter().map(|v| v * v).sum::<f64>().sqrt();
        let se = estimate.frobenius_std_error() / norm.max(f64::MIN_POSITIVE);
        Self::matrix(target, closed, &estimate.mean, Some(se), estimate.samples, MC_TOLERANCE)
    }

    /// [`OracleReport::mc_matrix`] that also holds every diagonal block, of
    /// the given sizes, to the tolerance relative to that block's own norm.
    /// A block with a small share of the total norm can otherwise be wrong
    /// by more than the tolerance without moving the whole-matrix error.
    /// `rel_error` and `std_error` are those of the worst comparison.
    pub fn mc_blocks(target: impl Into<String>, closed: &Array2<f64>, estimate: &McMatrix, sizes: &[usize]) -> Self {
        let mut report = Self::mc_matrix(target, closed, estimate);
        if sizes.iter().sum::<usize>() != closed.nrows() || closed.dim() != estimate.mean.dim() {
            report.rel_error = f64::INFINITY;
            report.pass = false;
            return report;
        }
        let mut start = 0;
        for &len in sizes {
            let r = ndarray::s![start..start + len, start..start + len];
            let block = closed.slice(r).to_owned();
            let est = estimate.block(start, len);
            let rel = frobenius_relative_error(&block, &est.mean);
            if rel > report.rel_error {
                let norm = block.iter().map(|v| v * v).sum::<f64>().sqrt();
                report.rel_error = rel;
                report.std_error = Some(est.frobenius_std_error() / norm.max(f64::MIN_POSITIVE));
            }
            start += len;
        }
        report.pass = report.rel_error <= report.tolerance;
        report
    }
}

pub(crate) fn relative_error(closed: f64, estimate: f64) -> f64 {
    let diff = (estimate - closed).abs();
    if closed == 0.0 {
        diff
    } else {
        diff / closed.abs()
    }
}

pub(crate) fn frobenius_relative_error(closed: &Array2<f64>, estimate: &Array2<f64>) -> f64 {
    if closed.dim() != estimate.dim() {
        return f64::INFINITY;
    }
    let num: f64 = closed.iter().zip(estimate.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = closed.iter().map(|a| a * a).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}
