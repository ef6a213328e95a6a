//! Experiment configuration, read from JSON.
//!
//! ```json
//! {
//!   "dims": { "l": 256, "n": [192, 240] },
//!   "snr_db": [0, 10, 20, 30, 40],
//!   "nu": [2.01],
//!   "m_vectors": [1],
//!   "trials": 200,
//!   "prior": { "family": "student-t", "second_moment": 0.001 },
//!   "noise_mode": { "mode": "known" },
//!   "estimators": ["em", "ard", "mmse-oracle"],
//!   "bounds": ["HCRB", "BCRB", "MCRB"],
//!   "master_seed": 2024,
//!   "output_dir": "results"
//! }
//! ```
//!
//! Optional fields: `em` (variant `map` or `flat`, `max_iter`, `tol`),
//! `ard` (see [`ArdOptions`]) and `memory_budget_mb`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::bounds::BoundKind;
use crate::error::{ensure_positive, invalid, Result};
use crate::estimators::ArdOptions;
use crate::io::read_json;
use crate::model::{GcpPrior, IgDistribution, SignalPrior, StudentTPrior};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub l: usize,
    pub n: Vec<usize>,
}

/// Prior family. `λ` is not given directly: for every `ν` on the grid it
/// is set so that `E[x_i²]` equals `second_moment`, which keeps the SNR
/// scale comparable across `ν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorSpec {
    StudentT { second_moment: f64 },
    Gcp { tau: f64, second_moment: f64 },
}

impl PriorSpec {
    pub fn second_moment(&self) -> f64 {
        match *self {
            PriorSpec::StudentT { second_moment } | PriorSpec::Gcp { second_moment, .. } => second_moment,
        }
    }

    /// The concrete prior at degrees of freedom `nu`.
    pub fn at(&self, nu: f64) -> Result<SignalPrior> {
        match *self {
            PriorSpec::StudentT { second_moment } => {
                Ok(SignalPrior::StudentT(StudentTPrior::from_second_moment(nu, second_moment)?))
            }
            PriorSpec::Gcp { tau, second_moment } => {
                ensure_positive("tau", tau)?;
                ensure_positive("second moment", second_moment)?;
                if !(nu > 2.0) {
                    return Err(invalid(format!("the GCP second moment needs nu > 2, got {nu}")));
                }
                // E[x²] = (ν/λ)^{2/τ} R with R = Γ(3/τ)Γ((ν−2)/τ)/(Γ(1/τ)Γ(ν/τ)).
                let ln_r = ln_gamma(3.0 / tau) + ln_gamma((nu - 2.0) / tau) - ln_gamma(1.0 / tau) - ln_gamma(nu / tau);
                let lambda = nu * (0.5 * tau * (ln_r - second_moment.ln())).exp();
                Ok(SignalPrior::Gcp(GcpPrior::new(tau, nu, lambda)?))
            }
        }
    }
}

/// How the noise variance is treated. The SNR axis sets `ξ` (or `E[ξ]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseMode {
    /// `ξ` known to every estimator.
    Known,
    /// `ξ` fixed but unknown; EM estimates it.
    DeterministicUnknown,
    /// `ξ ~ IG(c, d)` per trial with `d = (c − 1)·ξ_snr`, so that the mean
    /// matches the SNR axis. Needs `c > 1`.
    RandomIg { c: f64 },
}

impl NoiseMode {
    pub fn estimates_noise(&self) -> bool {
        !matches!(self, NoiseMode::Known)
    }

    /// The IG law of `ξ` for a given SNR-implied variance, if random.
    pub fn noise_law(&self, xi_snr: f64) -> Result<Option<IgDistribution>> {
        match *self {
            NoiseMode::RandomIg { c } => {
                if !(c > 1.0) {
                    return Err(invalid(format!("random noise needs c > 1 for a finite mean, got {c}")));
                }
                Ok(Some(IgDistribution::new(c, (c - 1.0) * xi_snr)?))
            }
            _ => Ok(None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Em,
    Ard,
    MmseOracle,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Em => "em",
            EstimatorKind::Ard => "ard",
            EstimatorKind::MmseOracle => "mmse-oracle",
        }
    }
}

/// M-step flavour of the EM series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmVariant {
    /// IG-MAP updates with the generating hyperprior (and IG(c, d) on `ξ`
    /// when the noise is random).
    Map,
    /// Plain maximum-likelihood updates.
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmSettings {
    pub variant: EmVariant,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for EmSettings {
    fn default() -> Self {
        Self { variant: EmVariant::Map, max_iter: 500, tol: 1e-6 }
    }
}

fn default_memory_budget() -> usize {
    2048
}

/// ARD settings of the harness: the library defaults with the outer
/// tolerance relaxed to `10⁻⁴`, past which the MSE no longer moves.
fn default_ard() -> ArdOptions {
    ArdOptions { tol: 1e-4, ..ArdOptions::default() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dims: Dims,
    pub snr_db: Vec<f64>,
    pub nu: Vec<f64>,
    pub m_vectors: Vec<usize>,
    pub trials: usize,
    pub prior: PriorSpec,
    pub noise_mode: NoiseMode,
    pub estimators: Vec<EstimatorKind>,
    pub bounds: Vec<BoundKind>,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub em: EmSettings,
    #[serde(default = "default_ard")]
    pub ard: ArdOptions,
    /// Upper limit on the working memory of all workers together.
    #[serde(default = "default_memory_budget")]
    pub memory_budget_mb: usize,
}

/// Grid sizes of the desk-scale defaults and of the full-scale runs.
impl ExperimentConfig {
    /// Desk-scale defaults: `L = 256`, `N ∈ {96, 128, 192, 240}`, SNR 0–40 dB,
    /// `ν ∈ {2.01, 2.05}`, `M ∈ {1, 8}`, 200 trials.
    pub fn desk_default() -> Self {
        Self {
            dims: Dims { l: 256, n: vec![96, 128, 192, 240] },
            snr_db: vec![0.0, 10.0, 20.0, 30.0, 40.0],
            nu: vec![2.01, 2.05],
            m_vectors: vec![1, 8],
            trials: 200,
            prior: PriorSpec::StudentT { second_moment: 1e-3 },
            noise_mode: NoiseMode::Known,
            estimators: vec![EstimatorKind::Em, EstimatorKind::Ard, EstimatorKind::MmseOracle],
            bounds: vec![BoundKind::Hcrb, BoundKind::Bcrb, BoundKind::Mcrb],
            master_seed: 2024,
            output_dir: PathBuf::from("results"),
            em: EmSettings::default(),
            ard: default_ard(),
            memory_budget_mb: default_memory_budget(),
        }
    }

    /// Full-scale grid: `L = 2048`, `N ∈ {750, 1000, 1500}`.
    pub fn full_scale() -> Self {
        Self {
            dims: Dims { l: 2048, n: vec![750, 1000, 1500] },
            memory_budget_mb: 4096,
            ..Self::desk_default()
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path)?;
        cfg.validate(1)?;
        Ok(cfg)
    }

    /// Estimated peak bytes of one trial: Φ, a few L×L and N×N work arrays.
    pub fn bytes_per_worker(&self, n: usize) -> usize {
        let l = self.dims.l;
        let m = self.m_vectors.iter().copied().max().unwrap_or(1);
        8 * (n * l + 6 * l * l + 3 * n * n + 4 * l * m + 4 * n * m)
    }

    /// Checks the grid and the memory budget for `threads` workers.
    pub fn validate(&self, threads: usize) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials must be >= 1"));
        }
        if self.dims.l == 0 || self.dims.n.is_empty() || self.dims.n.contains(&0) {
            return Err(invalid("dims need L >= 1 and a non-empty list of N >= 1"));
        }
        if self.snr_db.is_empty() || self.nu.is_empty() || self.m_vectors.is_empty() {
            return Err(invalid("grid axes snr_db, nu and m_vectors must be non-empty"));
        }
        if self.m_vectors.contains(&0) {
            return Err(invalid("m_vectors entries must be >= 1"));
        }
        if self.estimators.is_empty() {
            return Err(invalid("at least one estimator is required"));
        }
        if let Some(bad) = self.snr_db.iter().find(|v| !v.is_finite()) {
            return Err(invalid(format!("SNR values must be finite, found {bad}")));
        }
        for &nu in &self.nu {
            self.prior.at(nu)?;
        }
        for &snr in &self.snr_db {
            self.noise_mode.noise_law(crate::model::snr_to_noise_variance(snr, self.dims.l, self.prior.second_moment())?)?;
        }
        let budget = self.memory_budget_mb.saturating_mul(1 << 20);
        for &n in &self.dims.n {
            let need = self.bytes_per_worker(n).saturating_mul(threads.max(1));
            if need > budget {
                return Err(invalid(format!(
                    "N = {n} needs about {} MiB with {threads} workers, above the {} MiB budget",
                    need >> 20,
                    self.memory_budget_mb
                )));
            }
        }
        Ok(())
    }
}
