//! Off-policy learning: the MLP policy, censoring-aware policy-gradient
//! estimators, the early-stopped Adam trainer, the regression baseline and
//! the Lagrangian budget-constrained trainer.

mod constrained;
mod gradient;
mod mlp;
mod train;

pub use constrained::{train_constrained, ConstrainedConfig, ConstrainedResult, DualTracePoint};
pub use gradient::{
    estimated_cost, gradient_at, precompute_rmst_integrals, rmst_gradient, rmst_value,
    true_policy_gradient_at, GradientEstimator, Objective, RecordIntegrals, RmstIntegrals,
};
pub use mlp::{ForwardPass, MlpPolicy};
pub use train::{evaluate_improvement, train_policy, Adam, RegressionPolicy, TrainConfig, TrainedPolicy};

#[cfg(test)]
mod tests;
