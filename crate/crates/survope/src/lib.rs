//! Off-policy evaluation and learning for right-censored survival outcomes.
//!
//! Logged bandit data with survival outcomes only reveals `T = min(L, C)` and an
//! event indicator, so estimators that treat `T` as the event time systematically
//! underestimate policy value. This crate provides:
//!
//! * censoring-aware value estimators (IPCW-weighted inverse propensity scoring
//!   and a doubly robust variant) next to the naive DM/IPS/DR baselines,
//! * nuisance-model fitting (multinomial-logistic propensities, per-action Cox
//!   models with Breslow baselines, Kaplan-Meier curves),
//! * a synthetic log-normal/exponential environment with calibrated censoring
//!   and exact ground-truth oracles,
//! * policy-gradient learners over a small MLP policy, including a Lagrangian
//!   trainer for budget-constrained learning.
//!
//! Everything is deterministic given a seed: random streams are `ChaCha8`
//! counters addressed by `(base_seed, stream_id)`.

pub mod core;
pub mod error;
pub mod estimators;
pub mod nuisance;
pub mod opl;
pub mod synthenv;

pub use error::{Error, Result};
