//! Policy-gradient estimators on logged data.
//!
//! Every estimator produces the exact parameter gradient of the corresponding
//! value estimator evaluated at the current policy: importance weights are
//! `pi_theta(a_i|x_i) / pi_0_hat(a_i|x_i)` and the model term sums
//! `pi_theta(a|x) S_hat d log pi_theta(a|x)` over all actions. Quantities
//! that do not depend on the policy (censoring-adjusted indicator integrals,
//! outcome-model integrals, logged propensities, costs) are precomputed once
//! per dataset, so minibatch steps only pay for the network passes.

use serde::{Deserialize, Serialize};

use crate::core::{Dataset, Policy, TimeGrid};
use crate::error::{Error, Result};
use crate::estimators::NuisanceBundle;
use crate::opl::MlpPolicy;
use crate::synthenv::{sample_contexts, true_survival, EnvParams};

/// Which gradient estimator drives learning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientEstimator {
    /// Censoring-ignorant importance sampling.
    Ips,
    /// Censoring-ignorant doubly robust.
    Dr,
    /// Censoring-aware importance sampling.
    IpcwIps,
    /// Censoring-aware doubly robust.
    IpcwDr,
}

impl GradientEstimator {
    pub const ALL: [GradientEstimator; 4] = [
        GradientEstimator::Ips,
        GradientEstimator::Dr,
        GradientEstimator::IpcwIps,
        GradientEstimator::IpcwDr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GradientEstimator::Ips => "ips",
            GradientEstimator::Dr => "dr",
            GradientEstimator::IpcwIps => "ipcw_ips",
            GradientEstimator::IpcwDr => "ipcw_dr",
        }
    }

    pub fn censoring_aware(self) -> bool {
        matches!(self, GradientEstimator::IpcwIps | GradientEstimator::IpcwDr)
    }

    pub fn doubly_robust(self) -> bool {
        matches!(self, GradientEstimator::Dr | GradientEstimator::IpcwDr)
    }

    /// The value estimator this gradient ascends.
    pub fn value_estimator(self) -> crate::estimators::EstimatorKind {
        match self {
            GradientEstimator::Ips => crate::estimators::EstimatorKind::Ips,
            GradientEstimator::Dr => crate::estimators::EstimatorKind::Dr,
            GradientEstimator::IpcwIps => crate::estimators::EstimatorKind::IpcwIps,
            GradientEstimator::IpcwDr => crate::estimators::EstimatorKind::IpcwDr,
        }
    }
}

impl std::fmt::Display for GradientEstimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for GradientEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ips" => Ok(GradientEstimator::Ips),
            "dr" => Ok(GradientEstimator::Dr),
            "ipcw_ips" => Ok(GradientEstimator::IpcwIps),
            "ipcw_dr" => Ok(GradientEstimator::IpcwDr),
            other => Err(Error::Estimate(format!("unknown gradient estimator {other:?}"))),
        }
    }
}

/// Policy-independent per-record quantities for the RMST objective.
#[derive(Debug, Clone)]
pub struct RecordIntegrals {
    pub action: usize,
    pub logged_propensity: f64,
    pub cost: f64,
    /// Integral over the grid of the (censoring-adjusted) observed indicator.
    pub adjusted_int: f64,
    /// Integral of the outcome model per action; empty for IPS variants.
    pub outcome_int: Vec<f64>,
}

/// Precomputed integrals for one dataset under one estimator and grid.
#[derive(Debug, Clone)]
pub struct RmstIntegrals {
    pub estimator: GradientEstimator,
    pub per_record: Vec<RecordIntegrals>,
}

/// Precomputes every policy-independent integral. Fails when a required
/// nuisance is missing or a logged propensity is non-positive (the policy
/// class has full support, so any such record violates common support).
pub fn precompute_rmst_integrals(
    dataset: &Dataset,
    nuisance: &NuisanceBundle,
    estimator: GradientEstimator,
    grid: &TimeGrid,
) -> Result<RmstIntegrals> {
    dataset.require_nonempty("precompute_rmst_integrals")?;
    let censoring = if estimator.censoring_aware() {
        Some(nuisance.censoring.ok_or(Error::MissingNuisance("censoring survival model"))?)
    } else {
        None
    };
    let outcome = if estimator.doubly_robust() {
        Some(nuisance.outcome.ok_or(Error::MissingNuisance("outcome survival model"))?)
    } else {
        None
    };

    let mut per_record = Vec::with_capacity(dataset.len());
    let mut values = Vec::with_capacity(grid.m() + 1);
    let mut g_grid = Vec::with_capacity(grid.m() + 1);
    for r in dataset.records() {
        let logged_propensity = nuisance.propensity.prob(&r.context, r.action);
        if logged_propensity <= 0.0 {
            return Err(Error::CommonSupport { action: r.action, target_prob: f64::NAN });
        }

        if let Some(g) = censoring {
            g_grid.clear();
            g.survival_on_grid(&r.context, r.action, grid, &mut g_grid);
        }
        values.clear();
        values.push(1.0); // indicator at t -> 0+ with G(0) = 1
        for j in 1..=grid.m() {
            let indicator = f64::from(r.observed_time > grid.point(j));
            let v = if censoring.is_some() && indicator > 0.0 {
                indicator / g_grid[j].max(nuisance.weight_floor)
            } else {
                indicator
            };
            values.push(v);
        }
        let adjusted_int = grid.trapezoid(&values);

        let outcome_int = match outcome {
            Some(s) => (0..dataset.n_actions())
                .map(|a| {
                    values.clear();
                    s.survival_on_grid(&r.context, a, grid, &mut values);
                    grid.trapezoid(&values)
                })
                .collect(),
            None => Vec::new(),
        };

        per_record.push(RecordIntegrals {
            action: r.action,
            logged_propensity,
            cost: r.cost.unwrap_or(0.0),
            adjusted_int,
            outcome_int,
        });
    }
    Ok(RmstIntegrals { estimator, per_record })
}

/// Whether the survival part is maximized (longer is better) or minimized
/// (shorter is better, as when shrinking a purchase cycle).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Maximize,
    Minimize,
}

impl Objective {
    fn sign(self) -> f64 {
        match self {
            Objective::Maximize => 1.0,
            Objective::Minimize => -1.0,
        }
    }
}

/// The mean RMST-objective gradient over `indices`, optionally with the
/// Lagrangian cost term `- lambda * c_i` entering once per record.
///
/// For the doubly robust variants the gradient is
/// `w'_i (adjusted_i - S_int_i(a_i)) d log pi(a_i|x_i)
///  + sum_a pi(a|x_i) S_int_i(a) d log pi(a|x_i)`,
/// with the survival terms multiplied by the objective sign and the cost term
/// appended to the residual coefficient.
pub fn rmst_gradient(
    policy: &MlpPolicy,
    dataset: &Dataset,
    integrals: &RmstIntegrals,
    indices: &[usize],
    lagrangian: Option<(f64, Objective)>,
) -> Vec<f64> {
    use crate::core::DifferentiablePolicy;
    assert!(!indices.is_empty());
    let n_params = policy.n_params();
    let k = dataset.n_actions();
    let mut grad = vec![0.0; n_params];
    let scale = 1.0 / indices.len() as f64;
    let (lambda, sign) = match lagrangian {
        Some((lambda, objective)) => (lambda, objective.sign()),
        None => (0.0, 1.0),
    };
    let mut dlogits = vec![0.0; k];
    for &i in indices {
        let rec = &integrals.per_record[i];
        let x = &dataset.records()[i].context;
        let fwd = policy.forward(x);
        let w = fwd.probs[rec.action] / rec.logged_propensity;

        // Coefficient on d log pi(a_i | x): the (residual) reward.
        let mut coef = sign * rec.adjusted_int;
        if integrals.estimator.doubly_robust() {
            coef -= sign * rec.outcome_int[rec.action];
        }
        coef -= lambda * rec.cost;
        coef *= w;

        // d log pi(a_i|x) seeds e_{a_i} - probs; the model term seeds
        // sum_a q_a (e_a - probs) with q_a = pi_a * S_int_a.
        for v in dlogits.iter_mut() {
            *v = 0.0;
        }
        dlogits[rec.action] += coef;
        let mut total_q = coef;
        if integrals.estimator.doubly_robust() {
            for a in 0..k {
                let q = sign * fwd.probs[a] * rec.outcome_int[a];
                dlogits[a] += q;
                total_q += q;
            }
        }
        for (v, p) in dlogits.iter_mut().zip(&fwd.probs) {
            *v -= total_q * p;
        }
        policy.backward_logits(&fwd, &dlogits, scale, &mut grad);
    }
    grad
}

/// The OPE value of the current policy on `indices`, from the same
/// precomputed integrals the gradient uses (the early-stopping metric).
pub fn rmst_value(
    policy: &MlpPolicy,
    dataset: &Dataset,
    integrals: &RmstIntegrals,
    indices: &[usize],
) -> f64 {
    assert!(!indices.is_empty());
    let mut total = 0.0;
    for &i in indices {
        let rec = &integrals.per_record[i];
        let x = &dataset.records()[i].context;
        let probs = policy.probs(x);
        let w = probs[rec.action] / rec.logged_propensity;
        let mut v = w * rec.adjusted_int;
        if integrals.estimator.doubly_robust() {
            v -= w * rec.outcome_int[rec.action];
            for (a, &p) in probs.iter().enumerate() {
                v += p * rec.outcome_int[a];
            }
        }
        total += v;
    }
    total / indices.len() as f64
}

/// Importance-weighted mean logged cost of the current policy,
/// `(1/n) sum w'_i c_i`, the constraint estimate for the dual update.
pub fn estimated_cost(
    policy: &MlpPolicy,
    dataset: &Dataset,
    integrals: &RmstIntegrals,
    indices: &[usize],
) -> f64 {
    let mut total = 0.0;
    for &i in indices {
        let rec = &integrals.per_record[i];
        let x = &dataset.records()[i].context;
        let probs = policy.probs(x);
        total += probs[rec.action] / rec.logged_propensity * rec.cost;
    }
    total / indices.len() as f64
}

/// Point-in-time gradient estimators (the per-`t` forms of the objective).
pub fn gradient_at(
    policy: &MlpPolicy,
    dataset: &Dataset,
    nuisance: &NuisanceBundle,
    estimator: GradientEstimator,
    t: f64,
) -> Result<Vec<f64>> {
    use crate::core::DifferentiablePolicy;
    dataset.require_nonempty("gradient_at")?;
    let censoring = if estimator.censoring_aware() {
        Some(nuisance.censoring.ok_or(Error::MissingNuisance("censoring survival model"))?)
    } else {
        None
    };
    let outcome = if estimator.doubly_robust() {
        Some(nuisance.outcome.ok_or(Error::MissingNuisance("outcome survival model"))?)
    } else {
        None
    };
    let k = dataset.n_actions();
    let mut grad = vec![0.0; policy.n_params()];
    let scale = 1.0 / dataset.len() as f64;
    let mut dlogits = vec![0.0; k];
    for r in dataset.records() {
        let logged_propensity = nuisance.propensity.prob(&r.context, r.action);
        if logged_propensity <= 0.0 {
            return Err(Error::CommonSupport { action: r.action, target_prob: f64::NAN });
        }
        let fwd = policy.forward(&r.context);
        let w = fwd.probs[r.action] / logged_propensity;
        let indicator = f64::from(r.observed_time > t);
        let adjusted = match censoring {
            Some(g) if indicator > 0.0 => {
                indicator / g.survival(&r.context, r.action, t).max(nuisance.weight_floor)
            }
            _ => indicator,
        };
        let mut coef = adjusted;
        if let Some(s) = outcome {
            coef -= s.survival(&r.context, r.action, t);
        }
        coef *= w;

        for v in dlogits.iter_mut() {
            *v = 0.0;
        }
        dlogits[r.action] += coef;
        let mut total_q = coef;
        if let Some(s) = outcome {
            for (a, v) in dlogits.iter_mut().enumerate() {
                let q = fwd.probs[a] * s.survival(&r.context, a, t);
                *v += q;
                total_q += q;
            }
        }
        for (v, p) in dlogits.iter_mut().zip(&fwd.probs) {
            *v -= total_q * p;
        }
        policy.backward_logits(&fwd, &dlogits, scale, &mut grad);
    }
    Ok(grad)
}

/// Monte Carlo evaluation of the exact policy gradient at time `t`:
/// `E_x sum_a pi(a|x) S(x,a,t) d log pi(a|x)`.
pub fn true_policy_gradient_at(
    env: &EnvParams,
    policy: &MlpPolicy,
    t: f64,
    n_mc: usize,
    seed: u64,
) -> Vec<f64> {
    use crate::core::DifferentiablePolicy;
    let contexts = sample_contexts(env.d, n_mc, seed);
    let k = env.n_actions;
    let mut grad = vec![0.0; policy.n_params()];
    let scale = 1.0 / n_mc as f64;
    let mut dlogits = vec![0.0; k];
    for x in &contexts {
        let fwd = policy.forward(x);
        let mut total_q = 0.0;
        for (a, v) in dlogits.iter_mut().enumerate() {
            let q = fwd.probs[a] * true_survival(env, x, a, t);
            *v = q;
            total_q += q;
        }
        for (v, p) in dlogits.iter_mut().zip(&fwd.probs) {
            *v -= total_q * p;
        }
        policy.backward_logits(&fwd, &dlogits, scale, &mut grad);
    }
    grad
}
