//! Scores of the marginal and hybrid likelihoods and Monte-Carlo moments of
//! them.
//!
//! Samples are drawn in fixed-size chunks, each with its own seed derived
//! from the caller's seed and the chunk index. Chunks may run on any
//! thread; their moments are merged in chunk order, so results do not
//! depend on scheduling.

use ndarray::{s, Array1, Array2, Axis};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{OracleReport, OracleValue, Z_TOLERANCE};
use crate::bounds::{marginal_covariance, mcrb_gamma, mcrb_gamma_xi};
use crate::error::{ensure_positive, invalid, Result};
use crate::linalg::symmetrize;
use crate::model::MeasurementEnsemble;
use crate::rng::{derive_seed, rng_from_seed, SblRng};

const CHUNK: usize = 8192;

/// Smallest sample size accepted by the regularity check.
const MIN_REGULARITY_SAMPLES: usize = 1000;

/// Monte-Carlo estimate of `E[s sᵀ]` with per-entry standard errors.
#[derive(Debug, Clone)]
pub struct McMatrix {
    pub mean: Array2<f64>,
    pub std_error: Array2<f64>,
    pub samples: usize,
}

impl McMatrix {
    /// Standard error of the whole matrix in Frobenius norm.
    pub fn frobenius_std_error(&self) -> f64 {
        self.std_error.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Square sub-block `[start, start + len)`.
    pub fn block(&self, start: usize, len: usize) -> McMatrix {
        let r = s![start..start + len, start..start + len];
        McMatrix { mean: self.mean.slice(r).to_owned(), std_error: self.std_error.slice(r).to_owned(), samples: self.samples }
    }
}

/// First and second sample moments of score vectors.
struct Moments {
    n: usize,
    sum: Array1<f64>,
    sum_sq: Array1<f64>,
    outer: Array2<f64>,
    outer_sq: Array2<f64>,
}

impl Moments {
    /// Moments of the rows of `scores`.
    fn from_batch(scores: &Array2<f64>) -> Self {
        let sq = scores.mapv(|v| v * v);
        Self {
            n: scores.nrows(),
            sum: scores.sum_axis(Axis(0)),
            sum_sq: sq.sum_axis(Axis(0)),
            outer: scores.t().dot(scores),
            outer_sq: sq.t().dot(&sq),
        }
    }

    fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum += &other.sum;
        self.sum_sq += &other.sum_sq;
        self.outer += &other.outer;
        self.outer_sq += &other.outer_sq;
    }

    fn mean(&self) -> Array1<f64> {
        &self.sum / self.n as f64
    }

    fn mean_std_error(&self) -> Array1<f64> {
        let n = self.n as f64;
        let mean = self.mean();
        Array1::from_shape_fn(mean.len(), |i| ((self.sum_sq[i] / n - mean[i] * mean[i]).max(0.0) / n).sqrt())
    }

    fn second_moment(&self) -> McMatrix {
        let n = self.n as f64;
        let mut mean = &self.outer / n;
        symmetrize(&mut mean);
        let se = Array2::from_shape_fn(mean.dim(), |(i, j)| {
            ((self.outer_sq[[i, j]] / n - mean[[i, j]] * mean[[i, j]]).max(0.0) / n).sqrt()
        });
        McMatrix { mean, std_error: se, samples: self.n }
    }
}

/// Runs `batch(rng, size)` over seed-partitioned chunks and merges the
/// score moments in chunk order.
fn mc_moments<F>(n_samples: usize, seed: u64, batch: F) -> Result<Moments>
where
    F: Fn(&mut SblRng, usize) -> Result<Array2<f64>> + Sync,
{
    if n_samples == 0 {
        return Err(invalid("n_samples must be >= 1"));
    }
    let chunks = n_samples.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_from_seed(derive_seed(seed, &[c as u64]));
            let size = CHUNK.min(n_samples - c * CHUNK);
            batch(&mut rng, size).map(|s| Moments::from_batch(&s))
        })
        .collect::<Result<_>>()?;
    let mut iter = parts.into_iter();
    let mut total = iter.next().expect("at least one chunk");
    for p in iter {
        total.merge(&p);
    }
    Ok(total)
}

fn standard_normal(rng: &mut SblRng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Marginal-likelihood scores in `(γ, ξ)` evaluated at one parameter value
/// for data drawn under another.
struct MarginalScorer {
    sample_factor: Array2<f64>,
    sigma_inv: Array2<f64>,
    phi_t_sigma_inv: Array2<f64>,
    p_diag: Array1<f64>,
    trace_inv: f64,
    m: usize,
}

impl MarginalScorer {
    fn new(
        phi: &MeasurementEnsemble,
        gamma_sample: &Array1<f64>,
        gamma_eval: &Array1<f64>,
        xi: f64,
        m: usize,
    ) -> Result<Self> {
        if m == 0 {
            return Err(invalid("number of measurement vectors must be >= 1"));
        }
        let sample = marginal_covariance(phi, gamma_sample, xi)?;
        let eval = marginal_covariance(phi, gamma_eval, xi)?;
        let sigma_inv = eval.inverse()?;
        let phi_t_sigma_inv = phi.entries().t().dot(&sigma_inv);
        let p_diag = Array1::from_shape_fn(phi.dim(), |j| phi_t_sigma_inv.row(j).dot(&phi.entries().column(j)));
        let trace_inv = sigma_inv.diag().sum();
        Ok(Self { sample_factor: sample.cholesky_factor, sigma_inv, phi_t_sigma_inv, p_diag, trace_inv, m })
    }

    /// Rows of scores for `size` draws, each summed over `m` columns.
    fn batch(&self, rng: &mut SblRng, size: usize) -> Array2<f64> {
        let (n, l) = (self.sample_factor.nrows(), self.p_diag.len());
        let mut out = Array2::zeros((size, l + 1));
        for _ in 0..self.m {
            let y = self.sample_factor.dot(&standard_normal(rng, n, size));
            let a = self.phi_t_sigma_inv.dot(&y);
            let sy = self.sigma_inv.dot(&y);
            for b in 0..size {
                for j in 0..l {
                    out[[b, j]] += 0.5 * (a[[j, b]] * a[[j, b]] - self.p_diag[j]);
                }
                let col = sy.column(b);
                out[[b, l]] += 0.5 * (col.dot(&col) - self.trace_inv);
            }
        }
        out
    }
}

/// Gradient of the log marginal likelihood `−½(ln|Σ_y| + yᵀΣ_y⁻¹y)` in
/// `(γ, ξ)`, as a vector of length `L + 1`:
/// `∂/∂γ_j = ½((Φ_jᵀΣ_y⁻¹y)² − Φ_jᵀΣ_y⁻¹Φ_j)` and
/// `∂/∂ξ = −½(Tr Σ_y⁻¹ − yᵀΣ_y⁻²y)`.
pub fn score_gamma_xi(y: &Array1<f64>, phi: &MeasurementEnsemble, gamma: &Array1<f64>, xi: f64) -> Result<Array1<f64>> {
    if y.len() != phi.n_obs() {
        return Err(invalid(format!("y has length {} but phi has {} rows", y.len(), phi.n_obs())));
    }
    let cov = marginal_covariance(phi, gamma, xi)?;
    let s_y = cov.solve(&y.clone().insert_axis(Axis(1)))?.remove_axis(Axis(1));
    let s_phi = cov.solve(phi.entries())?;
    let inv = cov.inverse()?;
    let l = phi.dim();
    let mut out = Array1::zeros(l + 1);
    for j in 0..l {
        let a = phi.entries().column(j).dot(&s_y);
        let p = phi.entries().column(j).dot(&s_phi.column(j));
        out[j] = 0.5 * (a * a - p);
    }
    out[l] = -0.5 * (inv.diag().sum() - s_y.dot(&s_y));
    Ok(out)
}

fn zero_mean_report(target: &str, moments: &Moments) -> OracleReport {
    let mean = moments.mean();
    let se = moments.mean_std_error();
    let z = mean.iter().zip(se.iter()).fold(0.0f64, |acc, (m, s)| {
        let z = if *s > 0.0 {
            m.abs() / s
        } else if *m == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        acc.max(z)
    });
    OracleReport {
        target: target.into(),
        closed_form: OracleValue::vector(&Array1::zeros(mean.len())),
        estimate: OracleValue::vector(&mean),
        rel_error: z,
        std_error: Some(se.iter().fold(0.0f64, |a, v| a.max(*v))),
        samples_or_nodes: moments.n,
        tolerance: Z_TOLERANCE,
        pass: z <= Z_TOLERANCE,
    }
}

/// Monte-Carlo mean of [`score_gamma_xi`] over `y ~ N(0, Σ_y)`. Passes when
/// every component is within three standard errors of zero.
pub fn regularity_check(
    phi: &MeasurementEnsemble,
    gamma: &Array1<f64>,
    xi: f64,
    n_samples: usize,
    seed: u64,
) -> Result<OracleReport> {
    regularity_check_misspecified(phi, gamma, gamma, xi, n_samples, seed)
}

/// As [`regularity_check`], but with data drawn under `gamma_true` and the
/// score evaluated at `gamma_eval`. Any real mismatch should fail.
pub fn regularity_check_misspecified(
    phi: &MeasurementEnsemble,
    gamma_true: &Array1<f64>,
    gamma_eval: &Array1<f64>,
    xi: f64,
    n_samples: usize,
    seed: u64,
) -> Result<OracleReport> {
    if n_samples < MIN_REGULARITY_SAMPLES {
        return Err(invalid(format!("regularity check needs at least {MIN_REGULARITY_SAMPLES} samples")));
    }
    let scorer = MarginalScorer::new(phi, gamma_true, gamma_eval, xi, 1)?;
    let moments = mc_moments(n_samples, seed, |rng, size| Ok(scorer.batch(rng, size)))?;
    Ok(zero_mean_report("regularity_score_mean", &moments))
}

/// Monte-Carlo `(γ, ξ)` Fisher information of the marginal likelihood
/// with `m` measurement vectors: the sample mean of `s sᵀ`.
pub fn mc_marginal_fim(
    phi: &MeasurementEnsemble,
    gamma: &Array1<f64>,
    xi: f64,
    m: usize,
    n_samples: usize,
    seed: u64,
) -> Result<McMatrix> {
    let scorer = MarginalScorer::new(phi, gamma, gamma, xi, m)?;
    Ok(mc_moments(n_samples, seed, |rng, size| Ok(scorer.batch(rng, size)))?.second_moment())
}

/// Monte-Carlo check of the joint `(γ, ξ)` marginalized FIM.
pub fn mc_fim(phi: &MeasurementEnsemble, gamma: &Array1<f64>, xi: f64, n_samples: usize, seed: u64) -> Result<OracleReport> {
    let closed = mcrb_gamma_xi(phi, xi, gamma)?.fim;
    let est = mc_marginal_fim(phi, gamma, xi, 1, n_samples, seed)?;
    Ok(OracleReport::mc_matrix("mcrb_gamma_xi_fim", &closed, &est))
}

/// Monte-Carlo check of the `γ` block `½ P∘P` on its own.
pub fn mc_fim_gamma(
    phi: &MeasurementEnsemble,
    gamma: &Array1<f64>,
    xi: f64,
    n_samples: usize,
    seed: u64,
) -> Result<OracleReport> {
    let closed = mcrb_gamma(phi, xi, gamma)?.fim;
    let est = mc_marginal_fim(phi, gamma, xi, 1, n_samples, seed)?.block(0, phi.dim());
    Ok(OracleReport::mc_matrix("mcrb_gamma_fim", &closed, &est))
}

/// Monte-Carlo FIM of the hybrid model with deterministic `(γ, ξ)` and
/// `x ~ N(0, diag(γ))`, ordered `(x, γ, ξ)` with dimension `2L + 1`.
///
/// With `m` columns the `γ` and `ξ` scores are summed over columns, while
/// the `x` block uses the first column only: it estimates the base matrix
/// `F` of the Kronecker form `F ⊗ I_M`.
pub fn mc_hybrid_fim(
    phi: &MeasurementEnsemble,
    gamma: &Array1<f64>,
    xi: f64,
    m: usize,
    n_samples: usize,
    seed: u64,
) -> Result<McMatrix> {
    ensure_positive("noise variance", xi)?;
    if m == 0 {
        return Err(invalid("number of measurement vectors must be >= 1"));
    }
    if gamma.len() != phi.dim() {
        return Err(invalid("gamma length does not match phi"));
    }
    if let Some(bad) = gamma.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
        return Err(invalid(format!("hybrid scores need strictly positive hyperparameters, found {bad}")));
    }
    let (n, l) = (phi.n_obs(), phi.dim());
    let sd = gamma.mapv(f64::sqrt);
    let noise_sd = xi.sqrt();
    let batch = |rng: &mut SblRng, size: usize| -> Result<Array2<f64>> {
        let mut out = Array2::zeros((size, 2 * l + 1));
        for col in 0..m {
            let x = standard_normal(rng, l, size) * &sd.view().insert_axis(Axis(1));
            // The residual y − Φx is exactly the noise draw.
            let e = standard_normal(rng, n, size) * noise_sd;
            let data = phi.entries().t().dot(&e) / xi;
            for b in 0..size {
                if col == 0 {
                    for i in 0..l {
                        out[[b, i]] = data[[i, b]] - x[[i, b]] / gamma[i];
                    }
                }
                for i in 0..l {
                    let g = gamma[i];
                    out[[b, l + i]] += -0.5 / g + x[[i, b]] * x[[i, b]] / (2.0 * g * g);
                }
                let ee = e.column(b).dot(&e.column(b));
                out[[b, 2 * l]] += -(n as f64) / (2.0 * xi) + ee / (2.0 * xi * xi);
            }
        }
        Ok(out)
    };
    Ok(mc_moments(n_samples, seed, batch)?.second_moment())
}
