//! Bounds for `M` measurement vectors sharing one hyperparameter vector.
//!
//! The `w` blocks are Kronecker products `F ⊗ I_M`; reports keep the base
//! matrix and record `kron_copies = M`.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{
    bcrb_gamma_entry, bcrb_xi_entry, data_plus_diag, mcrb_gamma_fim, mcrb_gamma_xi_fim, scaled_identity, Block,
    BoundKind, BoundParams, BoundReport, MarginalProjections, Target,
};
use crate::error::{ensure_positive, invalid, Result, SblError};
use crate::model::MeasurementEnsemble;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MmvCase {
    HcrbGamma,
    BcrbGamma,
    McrbGamma,
    HcrbW,
    BcrbW,
    McrbW,
    HcrbXi,
    BcrbXi,
    McrbGammaXi,
}

impl MmvCase {
    pub const ALL: [MmvCase; 9] = [
        MmvCase::HcrbGamma,
        MmvCase::BcrbGamma,
        MmvCase::McrbGamma,
        MmvCase::HcrbW,
        MmvCase::BcrbW,
        MmvCase::McrbW,
        MmvCase::HcrbXi,
        MmvCase::BcrbXi,
        MmvCase::McrbGammaXi,
    ];
}

/// Inputs for [`mmv_bounds`]. Each case reads only the fields it needs and
/// reports a missing one as an invalid argument.
#[derive(Debug, Clone, Copy)]
pub struct MmvInputs<'a> {
    pub phi: &'a MeasurementEnsemble,
    pub xi: Option<f64>,
    pub gamma: Option<&'a Array1<f64>>,
    pub nu: Option<f64>,
    pub lambda: Option<f64>,
    pub c: Option<f64>,
    pub d: Option<f64>,
}

impl<'a> MmvInputs<'a> {
    pub fn new(phi: &'a MeasurementEnsemble) -> Self {
        Self { phi, xi: None, gamma: None, nu: None, lambda: None, c: None, d: None }
    }
}

fn need<T>(v: Option<T>, name: &str, case: MmvCase) -> Result<T> {
    v.ok_or_else(|| invalid(format!("{case:?} needs `{name}`")))
}

fn positive(v: Option<f64>, name: &str, case: MmvCase) -> Result<f64> {
    let v = need(v, name, case)?;
    ensure_positive(name, v)?;
    Ok(v)
}

fn gamma_vec<'a>(inputs: &MmvInputs<'a>, case: MmvCase) -> Result<&'a Array1<f64>> {
    let g = need(inputs.gamma, "gamma", case)?;
    if g.len() != inputs.phi.dim() {
        return Err(invalid(format!("gamma has length {} but phi has {} columns", g.len(), inputs.phi.dim())));
    }
    Ok(g)
}

fn strictly_positive(g: &Array1<f64>) -> Result<()> {
    match g.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        Some(v) => Err(invalid(format!("hybrid bounds need strictly positive hyperparameters, found {v}"))),
        None => Ok(()),
    }
}

/// The MMV table of bounds for `m` measurement vectors.
///
/// `McrbW` has no closed-form FIM and returns [`SblError::Unsupported`].
pub fn mmv_bounds(case: MmvCase, inputs: &MmvInputs<'_>, m: usize) -> Result<BoundReport> {
    if m == 0 {
        return Err(invalid("number of measurement vectors must be >= 1"));
    }
    let phi = inputs.phi;
    let (l, n) = (phi.dim(), phi.n_obs());
    let mf = m as f64;
    let name = format!("mmv_{}", serde_json::to_value(case)?.as_str().unwrap_or("case"));
    let mut params = BoundParams { m_vectors: Some(m), ..Default::default() };
    let gamma_block = vec![Block { label: Target::Gamma, dim: l }];
    let xi_block = vec![Block { label: Target::Xi, dim: 1 }];
    let w_block = vec![Block { label: Target::X, dim: l }];

    match case {
        MmvCase::HcrbGamma => {
            let g = gamma_vec(inputs, case)?;
            strictly_positive(g)?;
            let fim = Array2::from_diag(&g.mapv(|v| mf / (2.0 * v * v)));
            BoundReport::new(BoundKind::Hcrb, name, gamma_block, fim, params)
        }
        MmvCase::BcrbGamma => {
            let nu = positive(inputs.nu, "nu", case)?;
            let lambda = positive(inputs.lambda, "lambda", case)?;
            params.nu = Some(nu);
            params.lambda = Some(lambda);
            let fim = scaled_identity(l, bcrb_gamma_entry(nu, lambda, m));
            BoundReport::new(BoundKind::Bcrb, name, gamma_block, fim, params)
        }
        MmvCase::McrbGamma => {
            let xi = positive(inputs.xi, "xi", case)?;
            let g = gamma_vec(inputs, case)?;
            params.xi = Some(xi);
            let proj = MarginalProjections::compute(phi, g, xi)?;
            BoundReport::new(BoundKind::Mcrb, name, gamma_block, mcrb_gamma_fim(&proj) * mf, params)
        }
        MmvCase::HcrbW => {
            let xi = positive(inputs.xi, "xi", case)?;
            let g = gamma_vec(inputs, case)?;
            strictly_positive(g)?;
            params.xi = Some(xi);
            let base = data_plus_diag(phi, 1.0 / xi, |i| 1.0 / g[i]);
            Ok(BoundReport::new(BoundKind::Hcrb, name, w_block, base, params)?.with_kron(m))
        }
        MmvCase::BcrbW => {
            let xi = positive(inputs.xi, "xi", case)?;
            let nu = positive(inputs.nu, "nu", case)?;
            let lambda = positive(inputs.lambda, "lambda", case)?;
            params.xi = Some(xi);
            params.nu = Some(nu);
            params.lambda = Some(lambda);
            let base = data_plus_diag(phi, 1.0 / xi, |_| lambda);
            Ok(BoundReport::new(BoundKind::Bcrb, name, w_block, base, params)?.with_kron(m))
        }
        MmvCase::McrbW => Err(SblError::Unsupported(
            "no closed-form FIM exists for the marginalized bound on W with multiple measurement vectors".into(),
        )),
        MmvCase::HcrbXi => {
            let xi = positive(inputs.xi, "xi", case)?;
            params.xi = Some(xi);
            params.n_obs = Some(n);
            let fim = scaled_identity(1, mf * n as f64 / (2.0 * xi * xi));
            BoundReport::new(BoundKind::Hcrb, name, xi_block, fim, params)
        }
        MmvCase::BcrbXi => {
            let c = positive(inputs.c, "c", case)?;
            let d = positive(inputs.d, "d", case)?;
            params.c = Some(c);
            params.d = Some(d);
            params.n_obs = Some(n);
            let fim = scaled_identity(1, bcrb_xi_entry(c, d, m * n));
            BoundReport::new(BoundKind::Bcrb, name, xi_block, fim, params)
        }
        MmvCase::McrbGammaXi => {
            let xi = positive(inputs.xi, "xi", case)?;
            let g = gamma_vec(inputs, case)?;
            params.xi = Some(xi);
            params.n_obs = Some(n);
            let proj = MarginalProjections::compute(phi, g, xi)?;
            let blocks = vec![Block { label: Target::Gamma, dim: l }, Block { label: Target::Xi, dim: 1 }];
            BoundReport::new(BoundKind::Mcrb, name, blocks, mcrb_gamma_xi_fim(&proj, mf), params)
        }
    }
}
