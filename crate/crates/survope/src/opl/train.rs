use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::core::rng::{stream, stream_ids};
use crate::core::{Dataset, Policy, TimeGrid};
use crate::error::{Error, Result};
use crate::estimators::{NuisanceBundle, SurvivalCurve};
use crate::opl::gradient::{precompute_rmst_integrals, rmst_gradient, rmst_value, GradientEstimator};
use crate::opl::MlpPolicy;
use crate::synthenv::{sample_contexts, true_policy_value_on_contexts, EnvParams};

/// Adam in ascent form: `theta += lr * m_hat / (sqrt(v_hat) + eps)`.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn ascend(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in
            params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / b1t;
            let v_hat = *v / b2t;
            *p += self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Training configuration for the unconstrained learner.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub estimator: GradientEstimator,
    pub grid: TimeGrid,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(estimator: GradientEstimator, grid: TimeGrid, seed: u64) -> Self {
        Self {
            estimator,
            grid,
            learning_rate: 0.01,
            batch_size: 256,
            max_epochs: 200,
            patience: 10,
            validation_fraction: 0.3,
            hidden: vec![64, 64],
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidRecord(format!(
                "validation_fraction must lie in (0,1), got {}",
                self.validation_fraction
            )));
        }
        if self.patience == 0 {
            return Err(Error::InvalidRecord("patience must be at least 1".into()));
        }
        Ok(())
    }
}

/// A trained policy with its early-stopping metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedPolicy {
    pub policy: MlpPolicy,
    pub config: TrainConfig,
    pub best_validation: f64,
    pub epochs_run: usize,
    pub validation_trace: Vec<f64>,
}

/// Trains an MLP policy by minibatch Adam ascent on the RMST objective of the
/// chosen gradient estimator.
///
/// The dataset splits 70/30 (by `validation_fraction`) with a seeded shuffle;
/// after every epoch the matching value estimator scores the held-out split
/// and training stops after `patience` epochs without improvement. Returns
/// the best-validation snapshot, which for a zero learning rate is the
/// initialization itself.
pub fn train_policy(
    dataset: &Dataset,
    nuisance: &NuisanceBundle,
    config: &TrainConfig,
) -> Result<TrainedPolicy> {
    dataset.require_nonempty("train_policy")?;
    config.validate()?;

    let mut split_rng = stream(config.seed, stream_ids::TRAIN_BASE);
    let mut init_rng = stream(config.seed, stream_ids::TRAIN_BASE + 1);
    let mut batch_rng = stream(config.seed, stream_ids::TRAIN_BASE + 2);

    let n = dataset.len();
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut split_rng);
    let n_val = ((n as f64) * config.validation_fraction).round() as usize;
    let n_val = n_val.clamp(1, n - 1);
    let (train_idx, val_idx) = indices.split_at(n - n_val);
    let mut train_idx = train_idx.to_vec();
    let val_idx = val_idx.to_vec();

    let integrals = precompute_rmst_integrals(dataset, nuisance, config.estimator, &config.grid)?;

    let mut policy =
        MlpPolicy::new(dataset.d(), dataset.n_actions(), &config.hidden, &mut init_rng);
    let mut params = policy.params();
    let mut adam = Adam::new(params.len(), config.learning_rate);

    let mut best_validation = rmst_value(&policy, dataset, &integrals, &val_idx);
    let mut best_params = params.clone();
    let mut validation_trace = vec![best_validation];
    let mut epochs_without_improvement = 0;
    let mut epochs_run = 0;

    for epoch in 0..config.max_epochs {
        epochs_run = epoch + 1;
        train_idx.shuffle(&mut batch_rng);
        for batch in train_idx.chunks(config.batch_size) {
            let grad = rmst_gradient(&policy, dataset, &integrals, batch, None);
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, msg: "non-finite gradient".into() });
            }
            adam.ascend(&mut params, &grad);
            policy.set_params(&params);
        }
        let validation = rmst_value(&policy, dataset, &integrals, &val_idx);
        if !validation.is_finite() {
            return Err(Error::Diverged { epoch, msg: "non-finite validation value".into() });
        }
        validation_trace.push(validation);
        if validation > best_validation {
            best_validation = validation;
            best_params = params.clone();
            epochs_without_improvement = 0;
        } else {
            epochs_without_improvement += 1;
            if epochs_without_improvement >= config.patience {
                break;
            }
        }
    }

    policy.set_params(&best_params);
    Ok(TrainedPolicy {
        policy,
        config: config.clone(),
        best_validation,
        epochs_run,
        validation_trace,
    })
}

/// Deterministic argmax policy over the outcome model's integrated survival:
/// picks `argmax_a integral of S_hat(x, a, .)`, ties toward the lowest index.
pub struct RegressionPolicy<'a> {
    outcome: &'a dyn SurvivalCurve,
    n_actions: usize,
    grid: TimeGrid,
}

impl<'a> RegressionPolicy<'a> {
    pub fn new(outcome: &'a dyn SurvivalCurve, n_actions: usize, grid: TimeGrid) -> Self {
        Self { outcome, n_actions, grid }
    }

    pub fn predicted_rmst(&self, context: &[f64], action: usize) -> f64 {
        let mut values = Vec::with_capacity(self.grid.m() + 1);
        values.push(self.outcome.survival(context, action, 0.0));
        for j in 1..=self.grid.m() {
            values.push(self.outcome.survival(context, action, self.grid.point(j)));
        }
        self.grid.trapezoid(&values)
    }

    pub fn best_action(&self, context: &[f64]) -> usize {
        let mut best = 0;
        let mut best_value = f64::NEG_INFINITY;
        for a in 0..self.n_actions {
            let v = self.predicted_rmst(context, a);
            if v > best_value {
                best_value = v;
                best = a;
            }
        }
        best
    }
}

impl Policy for RegressionPolicy<'_> {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn probs(&self, context: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_actions];
        p[self.best_action(context)] = 1.0;
        p
    }
}

/// True-value improvement ratio of a learned policy over the logging policy,
/// evaluated on one shared context sample (common random numbers), so a
/// learned policy identical to the logging policy scores exactly 1.
pub fn evaluate_improvement(
    env: &EnvParams,
    learned: &dyn Policy,
    grid: &TimeGrid,
    n_test: usize,
    seed: u64,
) -> f64 {
    let contexts = sample_contexts(env.d, n_test, seed);
    let learned_value = true_policy_value_on_contexts(env, learned, grid, &contexts);
    let logging = env.logging_policy();
    let logging_value = true_policy_value_on_contexts(env, &logging, grid, &contexts);
    learned_value / logging_value
}
