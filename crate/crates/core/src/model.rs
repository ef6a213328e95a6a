//! Generative side of the two-stage hierarchical model: measurement
//! ensembles, inverse-gamma hyperpriors, Student-t and generalized
//! compressible priors, noise, and full SMV/MMV problem instances.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{ensure_positive, invalid, Result};
use crate::io::matrix_rows;
use crate::rng::{derive_seed, rng_from_seed};

/// Known N×L measurement matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MeasurementEnsemble {
    #[serde(with = "matrix_rows")]
    entries: Array2<f64>,
}

impl MeasurementEnsemble {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (n, l) = entries.dim();
        if n == 0 || l == 0 {
            return Err(invalid(format!("measurement matrix must be non-empty, got {n}x{l}")));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(invalid("measurement matrix has non-finite entries"));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    /// Number of observations N.
    pub fn n_obs(&self) -> usize {
        self.entries.nrows()
    }

    /// Signal dimension L.
    pub fn dim(&self) -> usize {
        self.entries.ncols()
    }

    pub fn is_bernoulli(&self) -> bool {
        self.entries.iter().all(|&v| v == 1.0 || v == -1.0)
    }
}

/// Draws an N×L matrix of i.i.d. equiprobable ±1 entries.
pub fn sample_measurement_matrix(n_obs: usize, dim: usize, seed: u64) -> Result<MeasurementEnsemble> {
    if n_obs == 0 || dim == 0 {
        return Err(invalid(format!("dimensions must be positive, got {n_obs}x{dim}")));
    }
    let mut rng = rng_from_seed(seed);
    let entries = Array2::from_shape_simple_fn((n_obs, dim), || {
        if rng.random::<bool>() { 1.0 } else { -1.0 }
    });
    MeasurementEnsemble::new(entries)
}

/// Inverse-gamma distribution IG(shape, rate) with density
/// `rate^shape / Γ(shape) · γ^{-shape-1} · exp(-rate/γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IgDistribution {
    pub shape: f64,
    pub rate: f64,
}

impl IgDistribution {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        ensure_positive("IG shape", shape)?;
        ensure_positive("IG rate", rate)?;
        Ok(Self { shape, rate })
    }

    pub fn ln_pdf(&self, g: f64) -> f64 {
        if g <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shape * self.rate.ln() - ln_gamma(self.shape) - (self.shape + 1.0) * g.ln() - self.rate / g
    }

    /// Mean, defined for shape > 1.
    pub fn mean(&self) -> Option<f64> {
        (self.shape > 1.0).then(|| self.rate / (self.shape - 1.0))
    }

    /// `E[γ^{-k}] = Γ(shape + k) / (Γ(shape) rate^k)`.
    pub fn inverse_moment(&self, k: u32) -> f64 {
        (0..k).map(|j| (self.shape + j as f64) / self.rate).product()
    }

    /// Draws Gamma(shape, rate) and inverts it.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g = Gamma::new(self.shape, 1.0 / self.rate).expect("validated parameters");
        loop {
            let v = 1.0 / g.sample(rng);
            // Gamma draws can underflow to 0 for tiny shapes.
            if v.is_finite() && v > 0.0 {
                return v;
            }
        }
    }
}

/// Student-t prior with `nu` degrees of freedom and inverse-variance
/// scale `lambda`, obtained by marginalizing γ ~ IG(ν/2, ν/(2λ)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentTPrior {
    pub nu: f64,
    pub lambda: f64,
}

impl StudentTPrior {
    pub fn new(nu: f64, lambda: f64) -> Result<Self> {
        ensure_positive("nu", nu)?;
        ensure_positive("lambda", lambda)?;
        Ok(Self { nu, lambda })
    }

    /// Chooses λ so that `E[x_i²] = ν / (λ(ν−2))` equals `second_moment`.
    pub fn from_second_moment(nu: f64, second_moment: f64) -> Result<Self> {
        ensure_positive("second moment", second_moment)?;
        if !(nu > 2.0) {
            return Err(invalid(format!(
                "second-moment calibration needs nu > 2, got {nu}"
            )));
        }
        Self::new(nu, nu / (second_moment * (nu - 2.0)))
    }

    /// `E[x_i²] = ν / (λ(ν−2))`, finite only for ν > 2.
    pub fn second_moment(&self) -> Result<f64> {
        if self.nu > 2.0 {
            Ok(self.nu / (self.lambda * (self.nu - 2.0)))
        } else {
            Err(invalid(format!(
                "Student-t second moment is infinite for nu = {} <= 2",
                self.nu
            )))
        }
    }

    /// Hyperprior IG(ν/2, ν/(2λ)) on each γ_i.
    pub fn hyperprior(&self) -> IgDistribution {
        IgDistribution {
            shape: 0.5 * self.nu,
            rate: 0.5 * self.nu / self.lambda,
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let nu = self.nu;
        ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu)
            + 0.5 * (self.lambda / (std::f64::consts::PI * nu)).ln()
            - 0.5 * (nu + 1.0) * (self.lambda * x * x / nu).ln_1p()
    }
}

/// Generalized compressible prior, density `K (1 + λ|x|^τ/ν)^{-(ν+1)/τ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcpPrior {
    pub tau: f64,
    pub nu: f64,
    pub lambda: f64,
    /// Normalizer `K = (τ/2)(λ/ν)^{1/τ} Γ((ν+1)/τ) / (Γ(1/τ)Γ(ν/τ))`.
    pub norm_const: f64,
}

impl GcpPrior {
    pub fn new(tau: f64, nu: f64, lambda: f64) -> Result<Self> {
        ensure_positive("tau", tau)?;
        ensure_positive("nu", nu)?;
        ensure_positive("lambda", lambda)?;
        let ln_k = (0.5 * tau).ln() + (lambda / nu).ln() / tau + ln_gamma((nu + 1.0) / tau)
            - ln_gamma(1.0 / tau)
            - ln_gamma(nu / tau);
        Ok(Self { tau, nu, lambda, norm_const: ln_k.exp() })
    }

    pub fn student_t(prior: StudentTPrior) -> Self {
        Self::new(2.0, prior.nu, prior.lambda).expect("validated Student-t parameters")
    }

    /// Log-density of a single coordinate.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        self.norm_const.ln()
            - (self.nu + 1.0) / self.tau * (self.lambda * x.abs().powf(self.tau) / self.nu).ln_1p()
    }

    /// `E[x²] = (ν/λ)^{2/τ} Γ(3/τ)Γ((ν−2)/τ) / (Γ(1/τ)Γ(ν/τ))` for ν > 2.
    pub fn second_moment(&self) -> Result<f64> {
        if !(self.nu > 2.0) {
            return Err(invalid(format!("GCP second moment is infinite for nu = {}", self.nu)));
        }
        let t = self.tau;
        let ln = (2.0 / t) * (self.nu / self.lambda).ln() + ln_gamma(3.0 / t) + ln_gamma((self.nu - 2.0) / t)
            - ln_gamma(1.0 / t)
            - ln_gamma(self.nu / t);
        Ok(ln.exp())
    }
}

/// Log of the GCP density evaluated at the vector `x`, including `L·log K`.
pub fn gcp_log_density(prior: &GcpPrior, x: &[f64]) -> f64 {
    x.iter().map(|&xi| prior.ln_pdf(xi)).sum()
}

/// How the noise variance ξ = σ² is treated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum NoiseModel {
    KnownVariance { xi: f64 },
    DeterministicUnknown { xi: f64 },
    RandomIg { ig: IgDistribution },
}

impl NoiseModel {
    pub fn fixed_xi(&self) -> Option<f64> {
        match *self {
            NoiseModel::KnownVariance { xi } | NoiseModel::DeterministicUnknown { xi } => Some(xi),
            NoiseModel::RandomIg { .. } => None,
        }
    }

    pub fn is_known(&self) -> bool {
        matches!(self, NoiseModel::KnownVariance { .. })
    }

    fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::KnownVariance { xi } | NoiseModel::DeterministicUnknown { xi } => {
                ensure_positive("noise variance", xi)
            }
            NoiseModel::RandomIg { ig } => IgDistribution::new(ig.shape, ig.rate).map(|_| ()),
        }
    }
}

/// Prior on the compressible vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum SignalPrior {
    StudentT(StudentTPrior),
    Gcp(GcpPrior),
}

impl SignalPrior {
    pub fn second_moment(&self) -> Result<f64> {
        match self {
            SignalPrior::StudentT(p) => p.second_moment(),
            SignalPrior::Gcp(p) => p.second_moment(),
        }
    }

    pub fn nu(&self) -> f64 {
        match self {
            SignalPrior::StudentT(p) => p.nu,
            SignalPrior::Gcp(p) => p.nu,
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            SignalPrior::StudentT(p) => p.lambda,
            SignalPrior::Gcp(p) => p.lambda,
        }
    }
}

/// One synthesized problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SblInstance {
    pub phi: MeasurementEnsemble,
    /// Absent for GCP instances, which have no hyperparameters.
    pub gamma_true: Option<Vec<f64>>,
    #[serde(with = "matrix_rows")]
    pub x_true: Array2<f64>,
    pub xi_true: f64,
    #[serde(with = "matrix_rows")]
    pub observations: Array2<f64>,
    pub seed: u64,
}

impl SblInstance {
    pub fn n_vectors(&self) -> usize {
        self.x_true.ncols()
    }

    pub fn gamma_array(&self) -> Option<Array1<f64>> {
        self.gamma_true.as_ref().map(|g| Array1::from(g.clone()))
    }
}

/// i.i.d. draws γ_i ~ IG(ν/2, ν/(2λ)).
pub fn sample_hyperparameters(prior: &StudentTPrior, dim: usize, seed: u64) -> Result<Array1<f64>> {
    StudentTPrior::new(prior.nu, prior.lambda)?;
    let ig = prior.hyperprior();
    let mut rng = rng_from_seed(seed);
    Ok(Array1::from_shape_simple_fn(dim, || ig.sample(&mut rng)))
}

/// Draws `n_cols` independent columns from N(0, diag(γ)).
pub fn sample_compressible_vector(gamma: &Array1<f64>, n_cols: usize, seed: u64) -> Result<Array2<f64>> {
    if n_cols == 0 {
        return Err(invalid("n_cols must be >= 1"));
    }
    if let Some(bad) = gamma.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
        return Err(invalid(format!("hyperparameters must be > 0, found {bad}")));
    }
    let mut rng = rng_from_seed(seed);
    let sd = gamma.mapv(f64::sqrt);
    let mut x = Array2::zeros((gamma.len(), n_cols));
    for m in 0..n_cols {
        for (i, s) in sd.iter().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[[i, m]] = s * z;
        }
    }
    Ok(x)
}

/// i.i.d. GCP draws. With `t = λ|x|^τ/ν` the magnitude satisfies
/// `t = G₁/G₂` where `G₁ ~ Gamma(1/τ)` and `G₂ ~ Gamma(ν/τ)` (a beta-prime
/// variate), so sampling is exact for every τ.
pub fn sample_gcp_vector(prior: &GcpPrior, dim: usize, seed: u64) -> Result<Array1<f64>> {
    let prior = GcpPrior::new(prior.tau, prior.nu, prior.lambda)?;
    let g1 = Gamma::new(1.0 / prior.tau, 1.0).map_err(|e| invalid(e.to_string()))?;
    let g2 = Gamma::new(prior.nu / prior.tau, 1.0).map_err(|e| invalid(e.to_string()))?;
    let scale = prior.nu / prior.lambda;
    let mut rng = rng_from_seed(seed);
    Ok(Array1::from_shape_simple_fn(dim, || {
        let t = g1.sample(&mut rng) / g2.sample(&mut rng);
        let mag = (scale * t).powf(1.0 / prior.tau);
        if rng.random::<bool>() { mag } else { -mag }
    }))
}

/// Builds a full instance: γ (Student-t only), X, ξ and observations
/// `Φ X + noise`. Sub-streams are derived from `seed` so each component is
/// reproducible on its own.
pub fn synthesize(
    phi: &MeasurementEnsemble,
    prior: &SignalPrior,
    noise: &NoiseModel,
    n_vectors: usize,
    seed: u64,
) -> Result<SblInstance> {
    if n_vectors == 0 {
        return Err(invalid("n_vectors must be >= 1"));
    }
    noise.validate()?;
    let dim = phi.dim();
    let (gamma_true, x_true) = match prior {
        SignalPrior::StudentT(p) => {
            let gamma = sample_hyperparameters(p, dim, derive_seed(seed, &[1]))?;
            let x = sample_compressible_vector(&gamma, n_vectors, derive_seed(seed, &[2]))?;
            (Some(gamma.to_vec()), x)
        }
        SignalPrior::Gcp(p) => {
            if n_vectors != 1 {
                return Err(invalid("GCP instances are single-measurement-vector only"));
            }
            let x = sample_gcp_vector(p, dim, derive_seed(seed, &[2]))?;
            (None, x.insert_axis(ndarray::Axis(1)))
        }
    };
    let xi_true = match *noise {
        NoiseModel::KnownVariance { xi } | NoiseModel::DeterministicUnknown { xi } => xi,
        NoiseModel::RandomIg { ig } => ig.sample(&mut rng_from_seed(derive_seed(seed, &[4]))),
    };
    let mut observations = phi.entries().dot(&x_true);
    let sd = xi_true.sqrt();
    let mut rng = rng_from_seed(derive_seed(seed, &[3]));
    for v in observations.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += sd * z;
    }
    Ok(SblInstance {
        phi: phi.clone(),
        gamma_true,
        x_true,
        xi_true,
        observations,
        seed,
    })
}

/// Noise variance giving `SNR = E‖Φx‖² / (N ξ)` for a ±1 ensemble, where
/// `E‖Φx‖² = N L E[x_i²]`: `ξ = L E[x_i²] / 10^{snr/10}`.
pub fn snr_to_noise_variance(snr_db: f64, dim: usize, second_moment: f64) -> Result<f64> {
    if !snr_db.is_finite() {
        return Err(invalid(format!("SNR must be finite, got {snr_db}")));
    }
    if dim == 0 {
        return Err(invalid("dimension must be >= 1"));
    }
    ensure_positive("second moment", second_moment)?;
    Ok(dim as f64 * second_moment / 10f64.powf(snr_db / 10.0))
}

/// Magnitudes sorted in descending order.
pub fn compressibility_profile(x: &[f64]) -> Vec<f64> {
    let mut m: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    m.sort_by(|a, b| b.total_cmp(a));
    m
}

/// Share of the total magnitude carried by the largest `fraction` of the
/// entries (at least one entry).
pub fn top_mass_fraction(x: &[f64], fraction: f64) -> f64 {
    let profile = compressibility_profile(x);
    let total: f64 = profile.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let k = ((fraction * profile.len() as f64).ceil() as usize).clamp(1, profile.len());
    profile[..k].iter().sum::<f64>() / total
}
