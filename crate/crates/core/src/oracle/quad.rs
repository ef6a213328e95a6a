//! Quadrature of prior expectations and finite-difference curvature of log
//! densities.

use serde::{Deserialize, Serialize};

use super::{OracleReport, QUAD_TOLERANCE};
use crate::bounds::{bcrb_gamma_entry, bcrb_xi_entry, gcp_fisher_term};
use crate::error::{Result, SblError};
use crate::model::{GcpPrior, IgDistribution};
use crate::quadrature::{integrate_real_line, integrate_to_infinity, Integral, QuadOptions};

const QUAD_OPTS: QuadOptions = QuadOptions { abs_tol: 1e-12, rel_tol: 1e-10, max_intervals: 4000 };

/// Named integrands for expectations under `IG(shape, rate)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IgIntegrand {
    /// `1/γ`, with expectation `shape/rate`.
    Reciprocal,
    /// Bayesian information on `γ` from `m` measurement vectors: the
    /// negative second derivative of the log hyperprior plus `m/(2γ²)`.
    /// Closed form `λ²(ν+2)(m+ν+6)/(2ν)` with `ν = 2·shape` and
    /// `λ = shape/rate`.
    BcrbGammaKernel { m: usize },
    /// Bayesian information on `ξ ~ IG(c, d)` from `n_obs` scalar
    /// observations, closed form `c(c+1)(n_obs/2 + c + 3)/d²`.
    BcrbXiKernel { n_obs: usize },
}

impl IgIntegrand {
    fn name(&self) -> String {
        match self {
            IgIntegrand::Reciprocal => "ig_reciprocal_moment".into(),
            IgIntegrand::BcrbGammaKernel { m } => format!("bcrb_gamma_kernel_m{m}"),
            IgIntegrand::BcrbXiKernel { n_obs } => format!("bcrb_xi_kernel_n{n_obs}"),
        }
    }

    fn eval(&self, ig: &IgDistribution, v: f64) -> f64 {
        let (a, b) = (ig.shape, ig.rate);
        // −∂²/∂v² of the IG log-density.
        let prior_curvature = 2.0 * b / (v * v * v) - (a + 1.0) / (v * v);
        match *self {
            IgIntegrand::Reciprocal => 1.0 / v,
            IgIntegrand::BcrbGammaKernel { m } => prior_curvature + m as f64 / (2.0 * v * v),
            IgIntegrand::BcrbXiKernel { n_obs } => prior_curvature + n_obs as f64 / (2.0 * v * v),
        }
    }

    fn closed_form(&self, ig: &IgDistribution) -> f64 {
        let (a, b) = (ig.shape, ig.rate);
        match *self {
            IgIntegrand::Reciprocal => a / b,
            IgIntegrand::BcrbGammaKernel { m } => bcrb_gamma_entry(2.0 * a, a / b, m),
            IgIntegrand::BcrbXiKernel { n_obs } => bcrb_xi_entry(a, b, n_obs),
        }
    }
}

fn domain_check(shape: f64, rate: f64) -> Result<IgDistribution> {
    if !(shape.is_finite() && shape > 0.0 && rate.is_finite() && rate > 0.0) {
        return Err(SblError::Domain(format!(
            "IG({shape}, {rate}) is not a proper density; the expectation does not converge"
        )));
    }
    IgDistribution::new(shape, rate)
}

/// `E[integrand(v)]` for `v ~ IG(shape, rate)` by adaptive quadrature in
/// `ln v`, centred on the mode.
pub fn quad_ig_expectation_value(shape: f64, rate: f64, integrand: IgIntegrand) -> Result<Integral> {
    let ig = domain_check(shape, rate)?;
    let ln_mode = (rate / (shape + 1.0)).ln();
    integrate_real_line(
        |t| {
            let v = (ln_mode + t).exp();
            let w = (ig.ln_pdf(v)).exp() * v;
            if w == 0.0 {
                0.0
            } else {
                w * integrand.eval(&ig, v)
            }
        },
        QUAD_OPTS,
    )
}

/// Quadrature of an IG expectation compared with its closed form.
pub fn quad_expectation_ig(shape: f64, rate: f64, integrand: IgIntegrand) -> Result<OracleReport> {
    let ig = domain_check(shape, rate)?;
    let value = quad_ig_expectation_value(shape, rate, integrand)?;
    Ok(OracleReport::scalar(
        integrand.name(),
        integrand.closed_form(&ig),
        value.value,
        value.evaluations(),
        QUAD_TOLERANCE,
    ))
}

/// Integrates `f(x)` over `x > 0` after the substitution `x = c·z^p`, with
/// `p` chosen to cancel an `x^α` singularity at the origin and `c` the
/// natural scale of the density.
fn half_line(f: impl Fn(f64) -> f64, alpha: f64, scale: f64) -> Result<Integral> {
    let p = if alpha < 0.0 { 1.0 / (alpha + 1.0) } else { 1.0 };
    integrate_to_infinity(
        |z: f64| {
            if z == 0.0 {
                return 0.0;
            }
            let x = scale * z.powf(p);
            f(x) * scale * p * z.powf(p - 1.0)
        },
        0.0,
        QUAD_OPTS,
    )
}

/// `−E[∂²log p(x)/∂x²]` for the GCP density by direct integration over `x`.
///
/// For `τ > 1` the curvature is integrable everywhere. At `τ = 1` the
/// density has a kink at zero: the integral is split there and the jump of
/// the one-sided derivatives, `2(ν+1)(λ/ν)`, contributes `2(ν+1)(λ/ν)p(0)`.
/// For `½ < τ < 1` the curvature is not integrable at zero, so the
/// equivalent score form `E[(∂log p/∂x)²]` is integrated instead.
pub(crate) fn gcp_fisher_quadrature(prior: &GcpPrior) -> Result<(f64, usize)> {
    let GcpPrior { tau, nu, lambda, norm_const } = *prior;
    if tau <= 0.5 {
        return Err(SblError::Domain(format!("GCP Fisher information is infinite for tau = {tau} <= 1/2")));
    }
    let rate = lambda / nu;
    let density = |x: f64| norm_const * (-(nu + 1.0) / tau * (rate * x.powf(tau)).ln_1p()).exp();
    let scale = (nu / lambda).powf(1.0 / tau);
    let integral = if tau >= 1.0 {
        half_line(
            |x| {
                let u = rate * x.powf(tau);
                density(x) * (nu + 1.0) * rate * x.powf(tau - 2.0) * (tau - 1.0 - u) / ((1.0 + u) * (1.0 + u))
            },
            // At τ = 1 the factor x^{τ−2}(τ−1−u) is bounded near zero.
            if tau == 1.0 { 0.0 } else { tau - 2.0 },
            scale,
        )?
    } else {
        half_line(
            |x| {
                let u = rate * x.powf(tau);
                let score = (nu + 1.0) * rate * x.powf(tau - 1.0) / (1.0 + u);
                density(x) * score * score
            },
            2.0 * tau - 2.0,
            scale,
        )?
    };
    let mut value = 2.0 * integral.value;
    if tau == 1.0 {
        value += 2.0 * (nu + 1.0) * rate * norm_const;
    }
    Ok((value, integral.evaluations()))
}

/// Quadrature of the GCP prior Fisher term compared with
/// [`gcp_fisher_term`].
pub fn quad_gcp_fisher_term(prior: &GcpPrior) -> Result<OracleReport> {
    let (value, nodes) = gcp_fisher_quadrature(prior)?;
    let closed = gcp_fisher_term(prior)?;
    Ok(OracleReport::scalar(
        format!("gcp_fisher_term_tau{}_nu{}_lambda{}", prior.tau, prior.nu, prior.lambda),
        closed,
        value,
        nodes,
        QUAD_TOLERANCE,
    ))
}

/// Second derivative of `logpdf` at `point` by central differences with
/// `h = 10⁻⁴·max(1, |point|)`, Richardson-extrapolated from `h` and `h/2`.
///
/// When the density has a kink at `kink`, points within `10h` of it are
/// rejected with a domain error.
pub fn fd_hessian_logprior(logpdf: impl Fn(f64) -> f64, point: f64, kink: Option<f64>) -> Result<f64> {
    if !point.is_finite() {
        return Err(SblError::InvalidArgument(format!("point must be finite, got {point}")));
    }
    let h = 1e-4 * point.abs().max(1.0);
    if let Some(k) = kink {
        if (point - k).abs() < 10.0 * h {
            return Err(SblError::Domain(format!("point {point} is within 10h of the kink at {k}")));
        }
    }
    let f0 = logpdf(point);
    let central = |h: f64| (logpdf(point + h) - 2.0 * f0 + logpdf(point - h)) / (h * h);
    let value = (4.0 * central(0.5 * h) - central(h)) / 3.0;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(SblError::NumericalFailure(format!("non-finite log density near {point}")))
    }
}

/// [`fd_hessian_logprior`] for the GCP log-density, which has a kink at
/// zero when `τ ≤ 1`.
pub fn fd_hessian_gcp(prior: &GcpPrior, point: f64) -> Result<f64> {
    let kink = (prior.tau <= 1.0).then_some(0.0);
    fd_hessian_logprior(|x| prior.ln_pdf(x), point, kink)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StudentTPrior;
    use approx::assert_relative_eq;

    #[test]
    fn ig_examples() {
        let r = quad_expectation_ig(1.0, 1.0, IgIntegrand::Reciprocal).unwrap();
        assert!(r.pass);
        assert_relative_eq!(r.closed_form.as_scalar().unwrap(), 1.0);
        let r = quad_expectation_ig(1.0, 1.0, IgIntegrand::BcrbGammaKernel { m: 1 }).unwrap();
        assert!(r.pass, "{r:?}");
        assert_relative_eq!(r.closed_form.as_scalar().unwrap(), 9.0, max_relative = 1e-14);
        let r = quad_expectation_ig(3.0, 0.2, IgIntegrand::BcrbXiKernel { n_obs: 100 }).unwrap();
        assert!(r.pass, "{r:?}");
        assert_relative_eq!(r.closed_form.as_scalar().unwrap(), 16800.0, max_relative = 1e-12);
    }

    #[test]
    fn ig_kernels_across_parameters() {
        for (a, b) in [(0.5, 0.1), (1.005, 1.005e3), (4.0, 7.0), (25.0, 0.3)] {
            for k in [IgIntegrand::Reciprocal, IgIntegrand::BcrbGammaKernel { m: 8 }, IgIntegrand::BcrbXiKernel { n_obs: 40 }] {
                let r = quad_expectation_ig(a, b, k).unwrap();
                assert!(r.pass, "{a} {b} {k:?}: {}", r.rel_error);
            }
        }
    }

    #[test]
    fn improper_ig_is_a_domain_error() {
        assert!(matches!(quad_expectation_ig(0.0, 1.0, IgIntegrand::Reciprocal), Err(SblError::Domain(_))));
        assert!(matches!(quad_expectation_ig(1.0, -1.0, IgIntegrand::Reciprocal), Err(SblError::Domain(_))));
    }

    #[test]
    fn gcp_examples() {
        let r = quad_gcp_fisher_term(&GcpPrior::new(2.0, 3.0, 1.0).unwrap()).unwrap();
        assert!(r.pass);
        assert_relative_eq!(r.estimate.as_scalar().unwrap(), 2.0 / 3.0, max_relative = 1e-6);
        let r = quad_gcp_fisher_term(&GcpPrior::new(1.0, 2.0, 1.0).unwrap()).unwrap();
        assert!(r.pass);
        assert_relative_eq!(r.estimate.as_scalar().unwrap(), 1.125, max_relative = 1e-6);
        let base = quad_gcp_fisher_term(&GcpPrior::new(2.0, 3.0, 1.0).unwrap()).unwrap().estimate.as_scalar().unwrap();
        let scaled = quad_gcp_fisher_term(&GcpPrior::new(2.0, 3.0, 4.0).unwrap()).unwrap().estimate.as_scalar().unwrap();
        assert_relative_eq!(scaled, 4.0 * base, max_relative = 1e-6);
    }

    #[test]
    fn gcp_quadrature_across_shapes() {
        for tau in [0.6, 0.75, 1.0, 1.5, 2.0, 3.0] {
            for (nu, lambda) in [(2.01, 1.0), (5.0, 0.3)] {
                let r = quad_gcp_fisher_term(&GcpPrior::new(tau, nu, lambda).unwrap()).unwrap();
                assert!(r.pass, "tau {tau} nu {nu}: {}", r.rel_error);
            }
        }
        assert!(matches!(
            quad_gcp_fisher_term(&GcpPrior::new(0.5, 2.0, 1.0).unwrap()),
            Err(SblError::Domain(_))
        ));
    }

    #[test]
    fn fd_gaussian_curvature() {
        for point in [-3.0, 0.0, 0.7, 40.0] {
            let v = fd_hessian_logprior(|x| -0.5 * x * x / 2.5, point, None).unwrap();
            assert!((v + 1.0 / 2.5).abs() < 1e-6, "{point}: {v}");
        }
    }

    #[test]
    fn fd_student_t_curvature() {
        let p = StudentTPrior::new(3.0, 1.0).unwrap();
        let (nu, lambda, x): (f64, f64, f64) = (3.0, 1.0, 1.0);
        let analytic = -(nu + 1.0) * lambda * (nu - lambda * x * x) / (nu + lambda * x * x).powi(2);
        let v = fd_hessian_logprior(|t| p.ln_pdf(t), x, None).unwrap();
        assert!((v - analytic).abs() < 1e-6);
        assert_relative_eq!(analytic, -0.5);
    }

    #[test]
    fn fd_inverse_gamma_curvature() {
        let ig = StudentTPrior::new(2.0, 1.0).unwrap().hyperprior();
        let v = fd_hessian_logprior(|g| ig.ln_pdf(g), 1.0, None).unwrap();
        assert!(v.abs() < 1e-6, "{v}");
        // With the Gaussian layer at x² = γ the joint curvature is −1/2.
        let joint = |g: f64| ig.ln_pdf(g) - 0.5 * g.ln() - 0.5 / g;
        let v = fd_hessian_logprior(joint, 1.0, None).unwrap();
        assert!((v + 0.5).abs() < 1e-6, "{v}");
    }

    #[test]
    fn fd_rejects_points_near_a_kink() {
        let gdp = GcpPrior::new(1.0, 2.0, 1.0).unwrap();
        assert!(matches!(fd_hessian_gcp(&gdp, 1e-4), Err(SblError::Domain(_))));
        assert!(fd_hessian_gcp(&gdp, 0.5).is_ok());
        assert!(fd_hessian_gcp(&GcpPrior::new(2.0, 2.0, 1.0).unwrap(), 0.0).is_ok());
    }
}
