//! Weighted ℓ1-regularized least squares,
//! `min_x ½‖y − Φx‖²/s + Σ_i w_i|x_i|`, by accelerated proximal gradient
//! (FISTA) with backtracking and gradient-based restarts.

use ndarray::{Array1, Array2, ArrayView1};
use ndarray_linalg::{FactorizeC, SolveC, UPLO};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, invalid, Result, SblError};
use crate::linalg::gram;
use crate::model::MeasurementEnsemble;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoOptions {
    pub max_iter: usize,
    /// Relative duality gap at which the iteration stops.
    pub tol: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self { max_iter: 2000, tol: 1e-8 }
    }
}

/// How often (in iterations) the duality gap is evaluated.
const GAP_EVERY: usize = 5;

/// Relative duality gap for the intermediate continuation stages.
const STAGE_TOL: f64 = 1e-4;

/// One weighted-lasso problem over a fixed `(Φ, y, s)`, with `ΦᵀΦ`, `Φᵀy`
/// and a Lipschitz estimate cached for repeated solves.
pub(crate) struct LassoProblem<'a> {
    phi: &'a Array2<f64>,
    y: ArrayView1<'a, f64>,
    g: &'a Array2<f64>,
    b: ArrayView1<'a, f64>,
    scale: f64,
    lipschitz: f64,
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration,
/// inflated slightly; backtracking covers any underestimate.
pub(crate) fn spectral_norm_estimate(g: &Array2<f64>) -> f64 {
    let n = g.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + (i % 7) as f64 * 0.1);
    let mut est = 0.0;
    for _ in 0..60 {
        let w = g.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        est = norm / v.dot(&v).sqrt();
        v = w / norm;
    }
    1.01 * est
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

impl<'a> LassoProblem<'a> {
    pub(crate) fn new(
        phi: &'a Array2<f64>,
        y: ArrayView1<'a, f64>,
        g: &'a Array2<f64>,
        b: ArrayView1<'a, f64>,
        g_norm: f64,
        scale: f64,
    ) -> Self {
        let lipschitz = if g_norm > 0.0 { g_norm / scale } else { 1.0 };
        Self { phi, y, g, b, scale, lipschitz }
    }

    fn penalty(x: &Array1<f64>, w: &Array1<f64>) -> f64 {
        x.iter().zip(w.iter()).map(|(a, b)| a.abs() * b).sum()
    }

    /// Relative duality gap at `x`, and the primal objective.
    fn gap(&self, x: &Array1<f64>, w: &Array1<f64>) -> (f64, f64) {
        let r = &self.y - &self.phi.dot(x);
        let rr = r.dot(&r);
        let corr = self.phi.t().dot(&r);
        let s = self.scale;
        let mut alpha: f64 = 1.0;
        for (c, wi) in corr.iter().zip(w.iter()) {
            let c = c.abs();
            if c > s * wi {
                alpha = alpha.min(s * wi / c);
            }
        }
        let primal = 0.5 * rr + s * Self::penalty(x, w);
        // Primal minus dual for the scaled residual `αr`, with `yᵀr`
        // expanded as `‖r‖² + xᵀΦᵀr` so no large terms cancel.
        let penalty_term: f64 = x.iter().zip(w.iter()).zip(corr.iter()).map(|((xi, wi), ci)| s * wi * xi.abs() - alpha * xi * ci).sum();
        // The residual carries a rounding error of order ε‖y‖, which puts a
        // floor of that order under any computed gap; only the excess counts.
        let floor = 64.0 * f64::EPSILON * self.y.dot(&self.y);
        let gap = (0.5 * (1.0 - alpha).powi(2) * rr + penalty_term - floor).max(0.0) / s;
        let p = primal / s;
        (gap / p.max(f64::MIN_POSITIVE), p)
    }

    fn objective(&self, x: &Array1<f64>, w: &Array1<f64>) -> f64 {
        let r = &self.y - &self.phi.dot(x);
        0.5 * r.dot(&r) / self.scale + Self::penalty(x, w)
    }

    /// Exact minimizer of the smooth problem restricted to the support and
    /// signs of `x`: `G_SS x_S = b_S − s w_S ∘ sign(x_S)`. Returns `None`
    /// when the system is singular or the solution flips a sign.
    fn polish(&self, x: &Array1<f64>, w: &Array1<f64>) -> Option<Array1<f64>> {
        let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
        if support.is_empty() || support.len() > self.phi.nrows() {
            return None;
        }
        let k = support.len();
        let gs = Array2::from_shape_fn((k, k), |(a, b)| self.g[[support[a], support[b]]]);
        let rhs = Array1::from_shape_fn(k, |a| {
            let i = support[a];
            self.b[i] - self.scale * w[i] * x[i].signum()
        });
        let z = gs.factorizec(UPLO::Lower).ok()?.solvec(&rhs).ok()?;
        let mut out = Array1::zeros(x.len());
        for (a, &i) in support.iter().enumerate() {
            if z[a].signum() != x[i].signum() || !z[a].is_finite() {
                return None;
            }
            out[i] = z[a];
        }
        Some(out)
    }

    /// Solves from `start`. A zero start goes straight to the exact
    /// homotopy path, falling back to continuation (weights inflated so
    /// the solution is sparse, then relaxed by factors of ten with warm
    /// starts) if the path does not reach the tolerance; the final stage
    /// also gets the unused half of `max_iter`. A nonzero start runs proximal
    /// steps for half of `max_iter` and hands the rest of the budget to the
    /// homotopy solve if they have not converged.
    pub(crate) fn solve(&self, w: &Array1<f64>, start: &Array1<f64>, opts: &LassoOptions) -> Result<Array1<f64>> {
        let mut budget = opts.max_iter.div_ceil(2);
        let mut x = start.clone();
        let cold = x.iter().all(|v| *v == 0.0);
        if cold {
            if let Some(xh) = self.homotopy(w, budget) {
                if self.gap(&xh, w).0 <= opts.tol {
                    return Ok(xh);
                }
            }
            // Smallest inflation at which x = 0 is optimal.
            let kappa0 = self
                .b
                .iter()
                .zip(w.iter())
                .map(|(b, wi)| if *wi > 0.0 { b.abs() / (self.scale * wi) } else { 0.0 })
                .fold(0.0f64, f64::max);
            let mut kappa = kappa0 / 10.0;
            while kappa > 10.0 {
                let staged = w * kappa;
                let (xs, used, _) = self.run(&staged, &x, STAGE_TOL, budget);
                budget = budget.saturating_sub(used);
                x = xs;
                kappa /= 10.0;
            }
            let (x, _, ok) = self.run(w, &x, opts.tol, budget + opts.max_iter / 2);
            return if ok { Ok(x) } else { Err(SblError::NonConvergence { max_iter: opts.max_iter, partial: x.to_vec() }) };
        }
        let (x, used, ok) = self.run(w, &x, opts.tol, budget);
        if ok {
            return Ok(x);
        }
        if let Some(xh) = self.homotopy(w, opts.max_iter - used) {
            if self.gap(&xh, w).0 <= opts.tol {
                return Ok(xh);
            }
        }
        Err(SblError::NonConvergence { max_iter: opts.max_iter, partial: x.to_vec() })
    }

    /// Follows the solution path of `½‖y − Φx‖² + μ Σ w_i|x_i|` from the
    /// largest useful `μ` down to `μ = s`, one kink per step, on the
    /// rescaled variables `u_i = w_i x_i`. A column that is linearly
    /// dependent on the active ones (a repeated or negated column, or any
    /// column once `N` are active) is skipped until the active set next
    /// shrinks, so the result must still pass the duality-gap check.
    /// Returns `None` if the step budget runs out or a weight is zero.
    fn homotopy(&self, w: &Array1<f64>, max_steps: usize) -> Option<Array1<f64>> {
        let l = w.len();
        if w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return None;
        }
        let inv_w = w.mapv(|v| 1.0 / v);
        let g_tilde = |i: usize, j: usize| self.g[[i, j]] * inv_w[i] * inv_w[j];
        let correlations = |u: &Array1<f64>| -> Array1<f64> {
            let x = u * &inv_w;
            (&self.b - &self.g.dot(&x)) * &inv_w
        };
        let target = self.scale;
        let mut u = Array1::zeros(l);
        let mut c = correlations(&u);
        let (mut j, mut mu) = c.iter().enumerate().fold((0, 0.0f64), |acc, (i, v)| {
            if v.abs() > acc.1 { (i, v.abs()) } else { acc }
        });
        if mu <= target {
            return Some(Array1::zeros(l));
        }
        let mut active: Vec<usize> = Vec::new();
        let mut in_active = vec![false; l];
        let mut chol = ActiveCholesky::default();
        if !chol.push(&active, j, &g_tilde) {
            return None;
        }
        active.push(j);
        in_active[j] = true;
        let mut blocked = usize::MAX;
        let mut skipped = vec![false; l];
        for step_index in 0..max_steps {
            let signs: Vec<f64> = active.iter().map(|&i| c[i].signum()).collect();
            let d = chol.solve(&signs);
            // Rate at which the correlations fall as μ decreases.
            let mut a = Array1::zeros(l);
            for (k, &i) in active.iter().enumerate() {
                let dk = d[k] * inv_w[i];
                a.scaled_add(dk, &self.g.row(i));
            }
            a *= &inv_w;
            let mut step = mu - target;
            let mut event: Option<(bool, usize)> = None;
            let tiny = 1e-14 * mu;
            for i in 0..l {
                if in_active[i] || i == blocked || skipped[i] {
                    continue;
                }
                for t in [(mu - c[i]) / (1.0 - a[i]), (mu + c[i]) / (1.0 + a[i])] {
                    if t > tiny && t < step {
                        step = t;
                        event = Some((true, i));
                    }
                }
            }
            for (k, &i) in active.iter().enumerate() {
                let t = -u[i] / d[k];
                if t > tiny && t < step {
                    step = t;
                    event = Some((false, k));
                }
            }
            for (k, &i) in active.iter().enumerate() {
                u[i] += step * d[k];
            }
            mu -= step;
            blocked = usize::MAX;
            match event {
                None => return Some(&u * &inv_w),
                Some((true, i)) => {
                    if chol.push(&active, i, &g_tilde) {
                        active.push(i);
                        in_active[i] = true;
                    } else {
                        skipped[i] = true;
                    }
                }
                Some((false, k)) => {
                    j = active.remove(k);
                    u[j] = 0.0;
                    in_active[j] = false;
                    blocked = j;
                    chol.remove(k);
                    skipped.fill(false);
                }
            }
            // Correlations move linearly along the segment; refresh them
            // exactly now and then to stop rounding drift.
            if step_index % 32 == 31 {
                c = correlations(&u);
            } else {
                c.scaled_add(-step, &a);
            }
        }
        None
    }

    /// Accelerated proximal gradient from `start` for at most `budget`
    /// iterations. Returns the iterate, iterations used and whether `tol`
    /// was met.
    fn run(&self, w: &Array1<f64>, start: &Array1<f64>, tol: f64, budget: usize) -> (Array1<f64>, usize, bool) {
        let opts = LassoOptions { max_iter: budget, tol };
        let mut lip = self.lipschitz;
        let mut x = start.clone();
        let mut gx = self.g.dot(&x);
        let mut z = x.clone();
        let mut gz = gx.clone();
        let mut t = 1.0f64;
        let mut last_support: Option<Vec<bool>> = None;
        for k in 0..opts.max_iter {
            if k % GAP_EVERY == 0 {
                let (rel_gap, p) = self.gap(&x, w);
                if rel_gap <= opts.tol || p == 0.0 {
                    return (x, k, true);
                }
                // Once the active set settles, jump to the exact minimizer
                // on it; proximal steps alone crawl when the penalty is
                // small relative to the curvature.
                let support: Vec<bool> = x.iter().map(|v| *v != 0.0).collect();
                if last_support.as_ref() == Some(&support) {
                    if let Some(xp) = self.polish(&x, w) {
                        if self.gap(&xp, w).0 <= opts.tol {
                            return (xp, k, true);
                        }
                        if self.objective(&xp, w) < self.objective(&x, w) {
                            x = xp;
                            gx = self.g.dot(&x);
                            z = x.clone();
                            gz = gx.clone();
                            t = 1.0;
                        }
                    }
                }
                last_support = Some(support);
            }
            let grad = (&gz - &self.b) / self.scale;
            let (x_new, gx_new) = loop {
                let cand: Array1<f64> = Array1::from_shape_fn(z.len(), |i| {
                    soft_threshold(z[i] - grad[i] / lip, w[i] / lip)
                });
                let gc = self.g.dot(&cand);
                let d = &cand - &z;
                // The sufficient-decrease test f(c) ≤ f(z) + ∇f·d + (L/2)‖d‖²
                // is exactly dᵀGd ≤ L s ‖d‖² for a quadratic, which avoids
                // cancellation between large objective values.
                let curvature = d.dot(&(&gc - &gz));
                if curvature <= lip * self.scale * d.dot(&d) * (1.0 + 1e-12) {
                    break (cand, gc);
                }
                lip *= 2.0;
                if !lip.is_finite() {
                    return (x, k, false);
                }
            };
            let step = &x_new - &x;
            let change = step.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if change == 0.0 {
                let ok = self.gap(&x_new, w).0 <= opts.tol;
                return (x_new, k + 1, ok);
            }
            // Restart the momentum when it points against the last step.
            let restart = (&z - &x_new).dot(&step) > 0.0;
            if restart {
                t = 1.0;
                z = x_new.clone();
                gz = gx_new.clone();
            } else {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let beta = (t - 1.0) / t_next;
                z = &x_new + &(&step * beta);
                gz = &gx_new + &((&gx_new - &gx) * beta);
                t = t_next;
            }
            x = x_new;
            gx = gx_new;
        }
        let ok = self.gap(&x, w).0 <= opts.tol;
        (x, opts.max_iter, ok)
    }
}

/// Solves `min_x ½‖y − Φx‖²/scale + Σ_i w_i|x_i|` from a zero start.
pub fn weighted_l1_solve(
    phi: &MeasurementEnsemble,
    y: &Array1<f64>,
    weights: &Array1<f64>,
    scale: f64,
    opts: &LassoOptions,
) -> Result<Array1<f64>> {
    ensure_positive("scale", scale)?;
    if y.len() != phi.n_obs() || weights.len() != phi.dim() {
        return Err(invalid("lasso dimensions do not match phi"));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
        return Err(invalid(format!("weights must be >= 0, found {w}")));
    }
    let g = gram(phi.entries().view());
    let b = phi.entries().t().dot(y);
    let norm = spectral_norm_estimate(&g);
    let problem = LassoProblem::new(phi.entries(), y.view(), &g, b.view(), norm, scale);
    problem.solve(weights, &Array1::zeros(phi.dim()), opts)
}

/// Objective `½‖y − Φx‖²/s + Σ w_i|x_i|`.
pub fn weighted_l1_objective(
    phi: &MeasurementEnsemble,
    y: &Array1<f64>,
    weights: &Array1<f64>,
    scale: f64,
    x: &Array1<f64>,
) -> f64 {
    let r = y - &phi.entries().dot(x);
    0.5 * r.dot(&r) / scale + LassoProblem::penalty(x, weights)
}

/// Growing lower Cholesky factor of the active Gram block.
#[derive(Default)]
struct ActiveCholesky {
    rows: Vec<Vec<f64>>,
}

impl ActiveCholesky {
    /// Appends index `j` to the block spanned by `active`. Returns false if
    /// the extended block is not numerically positive definite.
    fn push(&mut self, active: &[usize], j: usize, g: &impl Fn(usize, usize) -> f64) -> bool {
        let k = active.len();
        let mut row = Vec::with_capacity(k + 1);
        for (p, &i) in active.iter().enumerate() {
            let mut v = g(i, j);
            for q in 0..p {
                v -= self.rows[p][q] * row[q];
            }
            row.push(v / self.rows[p][p]);
        }
        let diag = g(j, j) - row.iter().map(|v| v * v).sum::<f64>();
        if !(diag > 1e-12 * g(j, j)) {
            return false;
        }
        row.push(diag.sqrt());
        self.rows.push(row);
        true
    }

    /// Drops the `k`-th index. With the factor partitioned around row `k`,
    /// the trailing block `L₃₃` absorbs the removed column `l₃₂` through
    /// the rank-one update `L₃₃L₃₃ᵀ + l₃₂l₃₂ᵀ`.
    fn remove(&mut self, k: usize) {
        self.rows.remove(k);
        let mut x: Vec<f64> = self.rows[k..].iter_mut().map(|row| row.remove(k)).collect();
        for j in 0..x.len() {
            let p = k + j;
            let ljj = self.rows[p][p];
            let r = ljj.hypot(x[j]);
            let (c, s) = (r / ljj, x[j] / ljj);
            self.rows[p][p] = r;
            for i in (j + 1)..x.len() {
                let lij = (self.rows[k + i][p] + s * x[i]) / c;
                x[i] = c * x[i] - s * lij;
                self.rows[k + i][p] = lij;
            }
        }
    }

    /// Solves `R Rᵀ d = rhs`.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let k = rhs.len();
        let mut z = vec![0.0; k];
        for p in 0..k {
            let mut v = rhs[p];
            for q in 0..p {
                v -= self.rows[p][q] * z[q];
            }
            z[p] = v / self.rows[p][p];
        }
        for p in (0..k).rev() {
            let mut v = z[p];
            for q in (p + 1)..k {
                v -= self.rows[q][p] * z[q];
            }
            z[p] = v / self.rows[p][p];
        }
        z
    }
}
