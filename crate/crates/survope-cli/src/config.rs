use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use survope::estimators::EstimatorKind;
use survope::opl::{GradientEstimator, Objective};
use survope::synthenv::EnvConfig;

/// Which nuisance sources a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuisanceMode {
    /// Exact environment curves and the exact logging policy.
    Oracle,
    /// Propensity, outcome and censoring models fitted per trial dataset.
    Fitted,
}

/// The experiment factor a sweep varies. Non-swept factors stay at the
/// defaults (`n` 10,000, censoring rate 0.3, epsilon 0.2, beta 1.0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "axis", content = "values")]
pub enum SweepAxis {
    N(Vec<usize>),
    Rho1(Vec<f64>),
    Epsilon(Vec<f64>),
    Beta(Vec<f64>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::N(_) => "n",
            SweepAxis::Rho1(_) => "rho1",
            SweepAxis::Epsilon(_) => "epsilon",
            SweepAxis::Beta(_) => "beta",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepAxis::N(v) => v.len(),
            SweepAxis::Rho1(v) => v.len(),
            SweepAxis::Epsilon(v) => v.len(),
            SweepAxis::Beta(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for SweepAxis {
    fn default() -> Self {
        SweepAxis::N(vec![500, 1_000, 2_000, 5_000, 10_000])
    }
}

/// One experiment description, read from TOML or JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    /// Seed that freezes the environment (weights, moments, intercept).
    pub env_seed: u64,
    /// Trial seeds are `base_seed + trial_index`; ground-truth evaluation
    /// uses `base_seed + 1_000_000` so truth never shares a stream with data.
    pub base_seed: u64,
    /// Logged dataset size when `n` is not the sweep axis.
    pub n: usize,
    /// Trials per sweep value; resolved by mode and scale when absent.
    pub n_trials: Option<usize>,
    pub epsilon: f64,
    pub grid_points: usize,
    pub estimators: Vec<EstimatorKind>,
    pub learners: Vec<GradientEstimator>,
    /// Adds the outcome-model argmax baseline to OPL sweeps.
    pub include_regression: bool,
    /// Adds the logging-policy passthrough to OPL sweeps (ratio exactly 1).
    pub include_logging: bool,
    pub nuisance: NuisanceMode,
    pub sweep: SweepAxis,
    /// Floor on censoring survival probabilities in fitted mode; oracle mode
    /// runs the literal unclamped estimators.
    pub weight_floor: f64,
    /// Ground-truth evaluation sample size; resolved by scale when absent.
    pub n_test: Option<usize>,
    pub budget_ratio: f64,
    pub objective: Objective,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            env_seed: 1,
            base_seed: 1_000,
            n: 10_000,
            n_trials: None,
            epsilon: 0.2,
            grid_points: 100,
            estimators: EstimatorKind::ALL.to_vec(),
            learners: GradientEstimator::ALL.to_vec(),
            include_regression: true,
            include_logging: false,
            nuisance: NuisanceMode::Fitted,
            sweep: SweepAxis::default(),
            weight_floor: survope::nuisance::DEFAULT_WEIGHT_FLOOR,
            n_test: None,
            budget_ratio: 0.8,
            objective: Objective::Maximize,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: ExperimentConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)
                .with_context(|| format!("invalid JSON config {}", path.display()))?,
            _ => toml::from_str(&text)
                .with_context(|| format!("invalid TOML config {}", path.display()))?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep.is_empty() {
            bail!("sweep values must be nonempty");
        }
        if let Some(n_trials) = self.n_trials {
            if n_trials < 2 {
                bail!("n_trials must be at least 2 for error aggregation");
            }
        }
        if self.estimators.is_empty() {
            bail!("estimator list must be nonempty");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            bail!("epsilon must lie in [0, 1]");
        }
        Ok(())
    }

    /// Trials per sweep value: the full-scale protocol behind `--paper-scale`,
    /// desk-scale defaults otherwise.
    pub fn resolve_trials(&self, mode: RunMode, paper_scale: bool) -> usize {
        if let Some(n) = self.n_trials {
            return n;
        }
        match (mode, paper_scale) {
            (RunMode::Ope, false) => 50,
            (RunMode::Ope, true) => 100,
            (RunMode::Opl, false) | (RunMode::Constrained, false) => 10,
            (RunMode::Opl, true) | (RunMode::Constrained, true) => 100,
        }
    }

    pub fn resolve_n_test(&self, paper_scale: bool) -> usize {
        self.n_test.unwrap_or(if paper_scale { 100_000 } else { 50_000 })
    }

    /// Seed for ground-truth evaluation, disjoint from every trial seed.
    pub fn truth_seed(&self) -> u64 {
        self.base_seed.wrapping_add(1_000_000)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Ope,
    Opl,
    Constrained,
}
