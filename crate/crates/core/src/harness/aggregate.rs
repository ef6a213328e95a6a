//! Squared-error aggregation over trials.
//!
//! Sums run in trial order over an indexed slice, so the result does not
//! depend on how the trials were scheduled.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::bounds::Target;
use crate::error::{invalid, Result};
use crate::estimators::EstimateResult;
use crate::model::SblInstance;

/// Ground truth of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub x: Array2<f64>,
    pub gamma: Option<Vec<f64>>,
    pub xi: f64,
}

impl From<&SblInstance> for Truth {
    fn from(inst: &SblInstance) -> Self {
        Self { x: inst.x_true.clone(), gamma: inst.gamma_true.clone(), xi: inst.xi_true }
    }
}

/// Sample mean and its standard error (zero for a single sample).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanStderr {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, stderr: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self { mean, stderr: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        Self { mean, stderr: (var / n as f64).sqrt() }
    }
}

/// MSE of one target over a set of trials.
///
/// `mse` is the mean total squared error `‖θ − θ̂‖²`; `per_component`
/// divides it by the number of scalar entries of the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRecord {
    pub target: Target,
    pub mse: f64,
    pub stderr: f64,
    pub per_component: f64,
    pub per_component_stderr: f64,
    pub components: usize,
    pub trials: usize,
}

impl MseRecord {
    pub(crate) fn from_errors(target: Target, errors: &[f64], components: usize) -> Self {
        let s = MeanStderr::of(errors);
        let k = components.max(1) as f64;
        Self {
            target,
            mse: s.mean,
            stderr: s.stderr,
            per_component: s.mean / k,
            per_component_stderr: s.stderr / k,
            components,
            trials: errors.len(),
        }
    }
}

/// Squared errors of one estimate, per target. `γ` is present when both the
/// estimate and the truth carry it, `ξ` when the estimator reports one.
pub(crate) fn squared_errors(est: &EstimateResult, truth: &Truth) -> Result<Vec<(Target, f64, usize)>> {
    if est.x_hat.dim() != truth.x.dim() {
        return Err(invalid(format!("estimate is {:?} but truth is {:?}", est.x_hat.dim(), truth.x.dim())));
    }
    let mut out = Vec::with_capacity(3);
    let ex: f64 = est.x_hat.iter().zip(truth.x.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    out.push((Target::X, ex, truth.x.len()));
    if let Some(g) = &truth.gamma {
        if !est.gamma_hat.is_empty() {
            if est.gamma_hat.len() != g.len() {
                return Err(invalid("gamma estimate and truth differ in length"));
            }
            let eg: f64 = est.gamma_hat.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum();
            out.push((Target::Gamma, eg, g.len()));
        }
    }
    if let Some(xi) = est.xi_hat {
        out.push((Target::Xi, (xi - truth.xi).powi(2), 1));
    }
    Ok(out)
}

/// Per-target MSE over paired estimates and truths, in the order x, γ, ξ.
pub fn aggregate_mse(estimates: &[EstimateResult], truths: &[Truth]) -> Result<Vec<MseRecord>> {
    if estimates.len() != truths.len() {
        return Err(invalid(format!("{} estimates but {} truths", estimates.len(), truths.len())));
    }
    if estimates.is_empty() {
        return Err(invalid("nothing to aggregate"));
    }
    let mut per_target: Vec<(Target, Vec<f64>, usize)> = Vec::new();
    for (est, truth) in estimates.iter().zip(truths) {
        for (target, err, k) in squared_errors(est, truth)? {
            match per_target.iter_mut().find(|(t, _, _)| *t == target) {
                Some((_, v, _)) => v.push(err),
                None => per_target.push((target, vec![err], k)),
            }
        }
    }
    per_target.sort_by_key(|(t, _, _)| *t);
    if let Some((t, v, _)) = per_target.iter().find(|(_, v, _)| v.len() != estimates.len()) {
        return Err(invalid(format!("target {t} present in {} of {} estimates", v.len(), estimates.len())));
    }
    Ok(per_target.into_iter().map(|(t, v, k)| MseRecord::from_errors(t, &v, k)).collect())
}
