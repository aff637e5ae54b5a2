use serde::{Deserialize, Serialize};

use crate::core::{softmax, Dataset, Policy};
use crate::error::{Error, Result};

/// Multinomial logistic model of the logging policy.
///
/// Scores are `x^T W + b` with the last class pinned to zero (weights and
/// intercept) for identifiability. `weights` is row-major `(d, n_actions)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropensityModel {
    pub d: usize,
    pub n_actions: usize,
    pub weights: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm of the objective gradient at the returned parameters.
    pub grad_max_norm: f64,
}

impl PropensityModel {
    fn scores(&self, context: &[f64]) -> Vec<f64> {
        let k = self.n_actions;
        let mut scores = self.intercepts.clone();
        for (j, &xj) in context.iter().enumerate() {
            for c in 0..k {
                scores[c] += xj * self.weights[j * k + c];
            }
        }
        scores
    }
}

impl Policy for PropensityModel {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn probs(&self, context: &[f64]) -> Vec<f64> {
        softmax(&self.scores(context))
    }
}

/// Maximizes the mean multinomial log-likelihood minus an L2 penalty on the
/// slope weights (intercepts unpenalized) by full-batch gradient ascent with
/// a backtracking line search. The ridge term enters through its exact
/// proximal update, so step sizes are governed by the likelihood curvature
/// alone and arbitrarily strong shrinkage stays well conditioned.
///
/// Converges when the penalized-objective gradient max-norm drops below
/// `tol`; hitting `max_iters` first leaves `converged = false` on the model
/// rather than failing. Errors when any action class is absent from the data.
pub fn fit_propensity(
    dataset: &Dataset,
    l2: f64,
    max_iters: usize,
    tol: f64,
) -> Result<PropensityModel> {
    dataset.require_nonempty("fit_propensity")?;
    let (d, k, n) = (dataset.d(), dataset.n_actions(), dataset.len());
    let mut counts = vec![0usize; k];
    for r in dataset.records() {
        counts[r.action] += 1;
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Fit(format!(
            "action {missing} never occurs in the data; every class must be present"
        )));
    }
    if k < 2 {
        return Err(Error::Fit("need at least two action classes".into()));
    }

    // Free parameters: (d + 1) slopes+intercept per class for classes 0..k-1.
    let free = k - 1;
    let n_params = (d + 1) * free;
    let mut params = vec![0.0; n_params];

    let probs_at = |params: &[f64], x: &[f64]| -> Vec<f64> {
        let mut scores = vec![0.0; k];
        for c in 0..free {
            let block = &params[c * (d + 1)..(c + 1) * (d + 1)];
            scores[c] = block[d] + x.iter().zip(&block[..d]).map(|(xj, w)| xj * w).sum::<f64>();
        }
        softmax(&scores)
    };

    let objective = |params: &[f64]| -> f64 {
        let mut ll = 0.0;
        for r in dataset.records() {
            ll += probs_at(params, &r.context)[r.action].max(1e-300).ln();
        }
        let mut penalty = 0.0;
        for c in 0..free {
            for j in 0..d {
                let w = params[c * (d + 1) + j];
                penalty += w * w;
            }
        }
        ll / n as f64 - 0.5 * l2 * penalty
    };

    // Mean log-likelihood gradient; the ridge part is handled by its prox.
    let likelihood_gradient = |params: &[f64]| -> Vec<f64> {
        let mut grad = vec![0.0; n_params];
        for r in dataset.records() {
            let p = probs_at(params, &r.context);
            for c in 0..free {
                let resid = f64::from(r.action == c) - p[c];
                let block = c * (d + 1);
                for (j, &xj) in r.context.iter().enumerate() {
                    grad[block + j] += resid * xj;
                }
                grad[block + d] += resid;
            }
        }
        for g in &mut grad {
            *g /= n as f64;
        }
        grad
    };
    let is_slope = |idx: usize| idx % (d + 1) < d;
    let penalized_grad_max = |params: &[f64], ll_grad: &[f64]| -> f64 {
        ll_grad
            .iter()
            .enumerate()
            .map(|(idx, g)| if is_slope(idx) { g - l2 * params[idx] } else { *g })
            .fold(0.0f64, |m, g| m.max(g.abs()))
    };
    // Gradient step on the likelihood, exact ridge prox on the slopes.
    let prox_step = |params: &[f64], ll_grad: &[f64], step: f64| -> Vec<f64> {
        params
            .iter()
            .zip(ll_grad)
            .enumerate()
            .map(|(idx, (p, g))| {
                let moved = p + step * g;
                if is_slope(idx) {
                    moved / (1.0 + step * l2)
                } else {
                    moved
                }
            })
            .collect()
    };

    let mut obj = objective(&params);
    let mut step = 1.0;
    let mut iterations = 0;
    let mut grad_max = f64::INFINITY;
    for iter in 0..max_iters {
        iterations = iter + 1;
        let ll_grad = likelihood_gradient(&params);
        grad_max = penalized_grad_max(&params, &ll_grad);
        if grad_max < tol {
            iterations = iter;
            break;
        }
        // Backtracking Armijo search on the prox direction, reusing (and
        // growing) the last accepted step.
        step *= 2.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = prox_step(&params, &ll_grad, step);
            let directional: f64 = trial
                .iter()
                .zip(&params)
                .enumerate()
                .map(|(idx, (t, p))| {
                    let g = if is_slope(idx) { ll_grad[idx] - l2 * params[idx] } else { ll_grad[idx] };
                    g * (t - p)
                })
                .sum();
            let trial_obj = objective(&trial);
            if trial_obj >= obj + 1e-4 * directional {
                params = trial;
                obj = trial_obj;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No ascent at floating-point resolution.
            break;
        }
    }

    // Unpack into full (d, k) weights with the last class at zero.
    let mut weights = vec![0.0; d * k];
    let mut intercepts = vec![0.0; k];
    for c in 0..free {
        let block = c * (d + 1);
        for j in 0..d {
            weights[j * k + c] = params[block + j];
        }
        intercepts[c] = params[block + d];
    }
    Ok(PropensityModel {
        d,
        n_actions: k,
        weights,
        intercepts,
        converged: grad_max < tol,
        iterations,
        grad_max_norm: grad_max,
    })
}
