use serde::{Deserialize, Serialize};

use crate::core::Dataset;
use crate::error::{Error, Result};
use crate::nuisance::FitTarget;

/// One per-action Cox fit: coefficients plus a Breslow baseline cumulative
/// hazard, predicting `S(t | x) = exp(-H0(t) * exp(x^T beta))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoxStratum {
    pub coefficients: Vec<f64>,
    /// Distinct target-event times, ascending.
    pub baseline_times: Vec<f64>,
    /// Breslow cumulative hazard at each baseline time; non-decreasing,
    /// implicitly 0 at t = 0. Beyond the last time the last value carries
    /// forward.
    pub baseline_cumhaz: Vec<f64>,
    /// True when the stratum had no target events; predictions are then 1.
    pub degenerate: bool,
    pub converged: bool,
    pub iterations: usize,
    /// Penalized mean partial log-likelihood after each Newton step.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

impl CoxStratum {
    /// Cumulative hazard at `t` (step function, right-continuous).
    fn cumulative_hazard(&self, t: f64) -> f64 {
        let idx = self.baseline_times.partition_point(|&bt| bt <= t);
        if idx == 0 {
            0.0
        } else {
            self.baseline_cumhaz[idx - 1]
        }
    }

    pub fn survival(&self, context: &[f64], t: f64) -> f64 {
        if self.degenerate || t <= 0.0 {
            return 1.0;
        }
        let eta: f64 = context.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum();
        (-self.cumulative_hazard(t) * eta.exp()).exp()
    }
}

/// Per-action Cox proportional-hazards models with fully independent
/// coefficients and baselines per stratum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoxModel {
    pub d: usize,
    pub n_actions: usize,
    pub ridge: f64,
    pub target: FitTarget,
    pub strata: Vec<CoxStratum>,
    pub warnings: Vec<String>,
}

impl CoxModel {
    /// `S_hat(t | x, a)` (or `G_hat` for a censoring fit).
    pub fn survival(&self, context: &[f64], action: usize, t: f64) -> Result<f64> {
        let stratum = self
            .strata
            .get(action)
            .ok_or_else(|| Error::Estimate(format!("unknown action index {action}")))?;
        Ok(stratum.survival(context, t))
    }
}

/// Default ridge strength for Cox fits.
pub const DEFAULT_COX_RIDGE: f64 = 1e-4;

/// Fits one Cox model per action on the records of that action, maximizing the
/// ridge-penalized mean partial log-likelihood (Breslow tie handling) by
/// Newton iterations with step halving, then computes the Breslow baseline.
///
/// A stratum without any target event degenerates to `S == 1` and leaves a
/// warning on the model instead of failing, so heavy-censoring sweeps
/// complete.
pub fn fit_cox(
    dataset: &Dataset,
    target: FitTarget,
    ridge: f64,
    max_iters: usize,
    tol: f64,
) -> Result<CoxModel> {
    dataset.require_nonempty("fit_cox")?;
    let (d, k) = (dataset.d(), dataset.n_actions());
    let mut warnings = Vec::new();
    let mut strata = Vec::with_capacity(k);
    for action in 0..k {
        let rows: Vec<(f64, bool, &[f64])> = dataset
            .records()
            .iter()
            .filter(|r| r.action == action)
            .map(|r| (r.observed_time, target.indicator(r.event), r.context.as_slice()))
            .collect();
        let n_events = rows.iter().filter(|(_, e, _)| *e).count();
        if rows.is_empty() || n_events == 0 {
            warnings.push(format!(
                "stratum {action}: {} records, {n_events} target events; degenerating to S == 1",
                rows.len()
            ));
            strata.push(CoxStratum {
                coefficients: vec![0.0; d],
                baseline_times: Vec::new(),
                baseline_cumhaz: Vec::new(),
                degenerate: true,
                converged: true,
                iterations: 0,
                objective_trace: Vec::new(),
            });
            continue;
        }
        let stratum = fit_stratum(&rows, d, ridge, max_iters, tol)
            .map_err(|e| Error::Fit(format!("stratum {action}: {e}")))?;
        if !stratum.converged {
            warnings.push(format!(
                "stratum {action}: Newton stopped after {} iterations without reaching tol",
                stratum.iterations
            ));
        }
        strata.push(stratum);
    }
    Ok(CoxModel { d, n_actions: k, ridge, target, strata, warnings })
}

/// Mean partial log-likelihood, gradient and Hessian under Breslow ties.
///
/// `order` must sort rows by time descending; the sweep accumulates risk-set
/// sums `S0 = sum exp(eta)`, `S1 = sum exp(eta) x`, `S2 = sum exp(eta) x x^T`.
fn pll_derivatives(
    rows: &[(f64, bool, &[f64])],
    order: &[usize],
    beta: &[f64],
    ridge: f64,
    d: usize,
) -> (f64, Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut ll = 0.0;
    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d * d];

    let mut s0 = 0.0;
    let mut s1 = vec![0.0; d];
    let mut s2 = vec![0.0; d * d];

    let mut i = 0;
    while i < order.len() {
        let t = rows[order[i]].0;
        // Add everyone tied at this time to the risk set.
        let mut j = i;
        while j < order.len() && rows[order[j]].0 == t {
            let (_, _, x) = rows[order[j]];
            let eta: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
            let w = eta.exp();
            s0 += w;
            for p in 0..d {
                s1[p] += w * x[p];
                for q in 0..d {
                    s2[p * d + q] += w * x[p] * x[q];
                }
            }
            j += 1;
        }
        // Process the events tied at this time (Breslow: common denominator).
        let mut d_t = 0.0;
        for &idx in &order[i..j] {
            let (_, ind, x) = rows[idx];
            if ind {
                d_t += 1.0;
                let eta: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
                ll += eta;
                for p in 0..d {
                    grad[p] += x[p];
                }
            }
        }
        if d_t > 0.0 {
            ll -= d_t * s0.ln();
            for p in 0..d {
                let mean_p = s1[p] / s0;
                grad[p] -= d_t * mean_p;
                for q in 0..d {
                    hess[p * d + q] -= d_t * (s2[p * d + q] / s0 - mean_p * s1[q] / s0);
                }
            }
        }
        i = j;
    }

    ll /= n;
    for g in grad.iter_mut() {
        *g /= n;
    }
    for h in hess.iter_mut() {
        *h /= n;
    }
    for p in 0..d {
        ll -= 0.5 * ridge * beta[p] * beta[p];
        grad[p] -= ridge * beta[p];
        hess[p * d + p] -= ridge;
    }
    (ll, grad, hess)
}

fn fit_stratum(
    rows: &[(f64, bool, &[f64])],
    d: usize,
    ridge: f64,
    max_iters: usize,
    tol: f64,
) -> Result<CoxStratum> {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[b].0.partial_cmp(&rows[a].0).expect("times are finite"));

    let mut beta = vec![0.0; d];
    let (mut ll, mut grad, mut hess) = pll_derivatives(rows, &order, &beta, ridge, d);
    if !ll.is_finite() {
        return Err(Error::Fit("non-finite partial likelihood at initialization".into()));
    }
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..max_iters {
        iterations = iter + 1;
        let grad_max = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if grad_max < tol {
            converged = true;
            iterations = iter;
            break;
        }
        // Newton direction: (-H) delta = grad, -H positive definite.
        let mut neg_h = hess.iter().map(|h| -h).collect::<Vec<f64>>();
        let delta = cholesky_solve(&mut neg_h, &grad, d)
            .ok_or_else(|| Error::Fit("singular Hessian in Cox Newton step".into()))?;

        // Step halving keeps the penalized objective non-decreasing.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> =
                beta.iter().zip(&delta).map(|(b, del)| b + step * del).collect();
            let (trial_ll, trial_grad, trial_hess) =
                pll_derivatives(rows, &order, &trial, ridge, d);
            if trial_ll.is_finite() && trial_ll >= ll {
                beta = trial;
                ll = trial_ll;
                grad = trial_grad;
                hess = trial_hess;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        trace.push(ll);
        if !accepted {
            break;
        }
    }

    // Breslow baseline at the fitted coefficients.
    let mut s0 = 0.0;
    let mut rev_times = Vec::new();
    let mut rev_increments = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let t = rows[order[i]].0;
        let mut j = i;
        let mut d_t = 0.0;
        while j < order.len() && rows[order[j]].0 == t {
            let (_, ind, x) = rows[order[j]];
            let eta: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
            s0 += eta.exp();
            if ind {
                d_t += 1.0;
            }
            j += 1;
        }
        if d_t > 0.0 {
            rev_times.push(t);
            rev_increments.push(d_t / s0);
        }
        i = j;
    }
    rev_times.reverse();
    rev_increments.reverse();
    let mut cum = 0.0;
    let baseline_cumhaz: Vec<f64> = rev_increments
        .iter()
        .map(|inc| {
            cum += inc;
            cum
        })
        .collect();

    Ok(CoxStratum {
        coefficients: beta,
        baseline_times: rev_times,
        baseline_cumhaz,
        degenerate: false,
        converged,
        iterations,
        objective_trace: trace,
    })
}

/// Solves `A x = b` for symmetric positive-definite `A` (destroyed in place).
fn cholesky_solve(a: &mut [f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    // In-place Cholesky: A = L L^T stored in the lower triangle.
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return None;
        }
        let l_jj = diag.sqrt();
        a[j * n + j] = l_jj;
        for i in (j + 1)..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / l_jj;
        }
    }
    // Forward solve L y = b.
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i * n + k] * y[k];
        }
        y[i] = v / a[i * n + i];
    }
    // Back solve L^T x = y.
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut v = y[i];
        for k in (i + 1)..n {
            v -= a[k * n + i] * x[k];
        }
        x[i] = v / a[i * n + i];
    }
    Some(x)
}
