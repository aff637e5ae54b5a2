use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::core::rng::{stream, stream_ids};
use crate::core::{Dataset, TimeGrid};
use crate::error::{Error, Result};
use crate::estimators::NuisanceBundle;
use crate::opl::gradient::{
    estimated_cost, precompute_rmst_integrals, rmst_gradient, GradientEstimator, Objective,
};
use crate::opl::train::Adam;
use crate::opl::MlpPolicy;

/// Lagrangian primal-dual configuration for budget-constrained learning.
///
/// The learner alternates Adam ascent on
/// `sign * V_hat(pi_theta) - lambda * (C_hat(pi_theta) - B)` with a projected
/// dual ascent on `lambda`, targeting the stricter budget
/// `B - safety_margin`. No early stopping; the epoch count is fixed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstrainedConfig {
    pub estimator: GradientEstimator,
    pub objective: Objective,
    pub grid: TimeGrid,
    pub budget: f64,
    pub lambda_init: f64,
    pub lambda_lr: f64,
    pub safety_margin: f64,
    pub policy_lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl ConstrainedConfig {
    pub fn new(
        estimator: GradientEstimator,
        objective: Objective,
        grid: TimeGrid,
        budget: f64,
        seed: u64,
    ) -> Self {
        Self {
            estimator,
            objective,
            grid,
            budget,
            lambda_init: 3.0,
            lambda_lr: 0.05,
            safety_margin: 0.05,
            policy_lr: 1e-3,
            batch_size: 512,
            epochs: 500,
            hidden: vec![64, 64],
            seed,
        }
    }
}

/// One epoch of the dual trace: the multiplier after the dual step and the
/// importance-weighted cost estimate that drove it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DualTracePoint {
    pub epoch: usize,
    pub lambda: f64,
    pub estimated_cost: f64,
}

/// A constrained training run: the final policy and the full dual trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstrainedResult {
    pub policy: MlpPolicy,
    pub config: ConstrainedConfig,
    pub trace: Vec<DualTracePoint>,
}

/// Trains under a budget: per epoch, minibatch Adam steps on the Lagrangian
/// gradient (the cost enters once per record, not per grid point), then one
/// projected dual update on the full data:
/// `lambda <- max(0, lambda + lambda_lr * (C_hat - (B - safety_margin)))`.
pub fn train_constrained(
    dataset: &Dataset,
    nuisance: &NuisanceBundle,
    config: &ConstrainedConfig,
) -> Result<ConstrainedResult> {
    dataset.require_nonempty("train_constrained")?;
    if !dataset.has_costs() {
        return Err(Error::InvalidRecord(
            "constrained training needs a cost on every record".into(),
        ));
    }

    let mut init_rng = stream(config.seed, stream_ids::TRAIN_BASE + 1);
    let mut batch_rng = stream(config.seed, stream_ids::TRAIN_BASE + 2);

    let integrals = precompute_rmst_integrals(dataset, nuisance, config.estimator, &config.grid)?;
    let all_indices: Vec<usize> = (0..dataset.len()).collect();
    let mut train_idx = all_indices.clone();

    let mut policy =
        MlpPolicy::new(dataset.d(), dataset.n_actions(), &config.hidden, &mut init_rng);
    let mut params = policy.params();
    let mut adam = Adam::new(params.len(), config.policy_lr);

    let mut lambda = config.lambda_init;
    let target = config.budget - config.safety_margin;
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut batch_rng);
        for batch in train_idx.chunks(config.batch_size) {
            let grad =
                rmst_gradient(&policy, dataset, &integrals, batch, Some((lambda, config.objective)));
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, msg: "non-finite gradient".into() });
            }
            adam.ascend(&mut params, &grad);
            policy.set_params(&params);
        }
        let cost = estimated_cost(&policy, dataset, &integrals, &all_indices);
        lambda = (lambda + config.lambda_lr * (cost - target)).max(0.0);
        if !lambda.is_finite() {
            return Err(Error::Diverged { epoch, msg: format!("non-finite multiplier {lambda}") });
        }
        trace.push(DualTracePoint { epoch, lambda, estimated_cost: cost });
    }

    Ok(ConstrainedResult { policy, config: config.clone(), trace })
}
