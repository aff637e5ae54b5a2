use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use survope::core::{Dataset, TimeGrid};
use survope::estimators::{
    aggregate_trials, estimate_rmst, NuisanceBundle, OracleCensoringCurve, OracleSurvivalCurve,
};
use survope::nuisance::{fit_cox, fit_propensity, FitTarget, FittedNuisances, DEFAULT_COX_RIDGE};
use survope::opl::{
    train_constrained, train_policy, ConstrainedConfig, RegressionPolicy, TrainConfig,
};
use survope::synthenv::{
    generate_dataset, make_env, make_eval_policy, sample_contexts, true_expected_cost,
    true_policy_value_on_contexts, EnvConfig, EnvParams,
};

use crate::config::{ExperimentConfig, NuisanceMode, RunMode, SweepAxis};

/// The factor levels of one sweep cell; non-swept factors hold the defaults.
#[derive(Debug, Clone, Copy)]
pub struct Factors {
    pub n: usize,
    pub rho1: f64,
    pub epsilon: f64,
    pub beta: f64,
}

pub fn sweep_cells(config: &ExperimentConfig) -> Vec<(f64, Factors)> {
    let base = Factors {
        n: config.n,
        rho1: config.env.target_censoring_rate,
        epsilon: config.epsilon,
        beta: config.env.beta,
    };
    match &config.sweep {
        SweepAxis::N(values) => values
            .iter()
            .map(|&n| (n as f64, Factors { n, ..base }))
            .collect(),
        SweepAxis::Rho1(values) => values
            .iter()
            .map(|&rho1| (rho1, Factors { rho1, ..base }))
            .collect(),
        SweepAxis::Epsilon(values) => values
            .iter()
            .map(|&epsilon| (epsilon, Factors { epsilon, ..base }))
            .collect(),
        SweepAxis::Beta(values) => values
            .iter()
            .map(|&beta| (beta, Factors { beta, ..base }))
            .collect(),
    }
}

pub fn env_for(config: &ExperimentConfig, factors: &Factors) -> Result<EnvParams> {
    let env_config = EnvConfig {
        target_censoring_rate: factors.rho1,
        beta: factors.beta,
        ..config.env.clone()
    };
    make_env(config.env_seed, &env_config).map_err(|e| anyhow!("environment construction: {e}"))
}

fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[derive(Serialize, Deserialize)]
struct TruthCacheEntry {
    value: f64,
}

/// Ground-truth policy value, cached on disk keyed by a content hash of the
/// environment and evaluation settings.
pub fn cached_truth(
    out_dir: &Path,
    env: &EnvParams,
    epsilon: f64,
    grid: &TimeGrid,
    n_test: usize,
    seed: u64,
) -> Result<f64> {
    let key_material = serde_json::to_string(&(env, epsilon, grid.m(), n_test, seed))?;
    let key = fnv1a_64(key_material.as_bytes());
    let cache_dir = out_dir.join("truth_cache");
    let cache_path = cache_dir.join(format!("{key:016x}.json"));
    if let Ok(text) = fs::read_to_string(&cache_path) {
        if let Ok(entry) = serde_json::from_str::<TruthCacheEntry>(&text) {
            return Ok(entry.value);
        }
    }
    let eval = make_eval_policy(env, epsilon, grid);
    let contexts = sample_contexts(env.d, n_test, seed);
    let value = true_policy_value_on_contexts(env, &eval, grid, &contexts);
    fs::create_dir_all(&cache_dir)
        .with_context(|| format!("cannot create {}", cache_dir.display()))?;
    fs::write(&cache_path, serde_json::to_string(&TruthCacheEntry { value })?)
        .with_context(|| format!("cannot write {}", cache_path.display()))?;
    Ok(value)
}

pub fn fit_nuisances(dataset: &Dataset) -> Result<FittedNuisances> {
    let propensity =
        fit_propensity(dataset, 1e-6, 300, 1e-6).map_err(|e| anyhow!("propensity fit: {e}"))?;
    let outcome = fit_cox(dataset, FitTarget::Event, DEFAULT_COX_RIDGE, 60, 1e-8)
        .map_err(|e| anyhow!("outcome fit: {e}"))?;
    let censoring = fit_cox(dataset, FitTarget::Censoring, DEFAULT_COX_RIDGE, 60, 1e-8)
        .map_err(|e| anyhow!("censoring fit: {e}"))?;
    Ok(FittedNuisances { propensity, outcome, censoring })
}

/// Evaluates every configured estimator for RMST on one trial dataset.
fn ope_trial(
    config: &ExperimentConfig,
    env: &EnvParams,
    grid: &TimeGrid,
    dataset: &Dataset,
) -> Result<Vec<f64>> {
    let eval = make_eval_policy(env, config.epsilon, grid);
    let logging = env.logging_policy();
    let oracle_s = OracleSurvivalCurve(env);
    let oracle_g = OracleCensoringCurve(env);
    let fitted = match config.nuisance {
        NuisanceMode::Oracle => None,
        NuisanceMode::Fitted => Some(fit_nuisances(dataset)?),
    };
    let bundle = match &fitted {
        None => NuisanceBundle::new(&logging)
            .with_outcome(&oracle_s)
            .with_censoring(&oracle_g)
            .with_weight_floor(0.0),
        Some(models) => NuisanceBundle::new(&models.propensity)
            .with_outcome(&models.outcome)
            .with_censoring(&models.censoring)
            .with_weight_floor(config.weight_floor),
    };
    config
        .estimators
        .iter()
        .map(|&kind| Ok(estimate_rmst(kind, dataset, &eval, &bundle, grid)?.value))
        .collect()
}

/// One CSV row per (sweep value, estimator):
/// `estimator,n,rho1,epsilon,beta,mse,squared_bias,variance`.
pub fn run_ope_sweep(
    config: &ExperimentConfig,
    out_dir: &Path,
    paper_scale: bool,
) -> Result<String> {
    let n_trials = config.resolve_trials(RunMode::Ope, paper_scale);
    let n_test = config.resolve_n_test(paper_scale);
    let grid = TimeGrid::new(config.env.tau, config.grid_points);
    let mut csv = String::from("estimator,n,rho1,epsilon,beta,mse,squared_bias,variance\n");
    for (value, factors) in sweep_cells(config) {
        let env = env_for(config, &factors)?;
        let truth =
            cached_truth(out_dir, &env, factors.epsilon, &grid, n_test, config.truth_seed())?;
        let cell_config = ExperimentConfig { epsilon: factors.epsilon, ..config.clone() };
        let per_trial: Vec<Vec<f64>> = (0..n_trials)
            .into_par_iter()
            .map(|trial| {
                let seed = config.base_seed + trial as u64;
                let dataset = generate_dataset(&env, factors.n, seed, None);
                ope_trial(&cell_config, &env, &grid, &dataset).with_context(|| {
                    format!(
                        "ope sweep {}={value}, trial {trial}, seed {seed}",
                        config.sweep.name()
                    )
                })
            })
            .collect::<Result<_>>()?;
        for (i, &kind) in config.estimators.iter().enumerate() {
            let estimates: Vec<f64> = per_trial.iter().map(|t| t[i]).collect();
            let metrics = aggregate_trials(&estimates, truth)?;
            csv.push_str(&format!(
                "{kind},{},{},{},{},{:.10e},{:.10e},{:.10e}\n",
                factors.n,
                factors.rho1,
                factors.epsilon,
                factors.beta,
                metrics.mse,
                metrics.squared_bias,
                metrics.variance
            ));
        }
    }
    let path = out_dir.join(format!("ope_{}.csv", config.sweep.name()));
    fs::write(&path, &csv).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(csv)
}

fn learner_names(config: &ExperimentConfig) -> Vec<String> {
    let mut names: Vec<String> = config.learners.iter().map(|l| l.to_string()).collect();
    if config.include_regression {
        names.push("regression".to_string());
    }
    if config.include_logging {
        names.push("logging".to_string());
    }
    names
}

/// Improvement ratios of every configured learner on one trial dataset.
fn opl_trial(
    config: &ExperimentConfig,
    env: &EnvParams,
    grid: &TimeGrid,
    dataset: &Dataset,
    seed: u64,
    n_test: usize,
) -> Result<Vec<f64>> {
    let logging = env.logging_policy();
    let oracle_s = OracleSurvivalCurve(env);
    let oracle_g = OracleCensoringCurve(env);
    let fitted = match config.nuisance {
        NuisanceMode::Oracle => None,
        NuisanceMode::Fitted => Some(fit_nuisances(dataset)?),
    };
    let bundle = match &fitted {
        None => NuisanceBundle::new(&logging)
            .with_outcome(&oracle_s)
            .with_censoring(&oracle_g)
            .with_weight_floor(0.0),
        Some(models) => NuisanceBundle::new(&models.propensity)
            .with_outcome(&models.outcome)
            .with_censoring(&models.censoring)
            .with_weight_floor(config.weight_floor),
    };
    let mut ratios = Vec::new();
    for &learner in &config.learners {
        let train_config = TrainConfig::new(learner, grid.clone(), seed);
        let trained = train_policy(dataset, &bundle, &train_config)?;
        ratios.push(survope::opl::evaluate_improvement(
            env,
            &trained.policy,
            grid,
            n_test,
            config.truth_seed(),
        ));
    }
    if config.include_regression {
        let outcome = bundle.outcome.expect("outcome model present in both modes");
        let regression = RegressionPolicy::new(outcome, dataset.n_actions(), grid.clone());
        ratios.push(survope::opl::evaluate_improvement(
            env,
            &regression,
            grid,
            n_test,
            config.truth_seed(),
        ));
    }
    if config.include_logging {
        // Common random numbers make the passthrough exactly 1.
        ratios.push(survope::opl::evaluate_improvement(
            env,
            &logging,
            grid,
            n_test,
            config.truth_seed(),
        ));
    }
    Ok(ratios)
}

/// One CSV row per (sweep value, learner):
/// `learner,n,rho1,epsilon,beta,mean_ratio,std_ratio`.
pub fn run_opl_sweep(
    config: &ExperimentConfig,
    out_dir: &Path,
    paper_scale: bool,
) -> Result<String> {
    let n_trials = config.resolve_trials(RunMode::Opl, paper_scale);
    // Improvement evaluation is per learner per trial; a smaller shared test
    // set keeps sweeps tractable while the truth cache still uses n_test.
    let n_test = config.resolve_n_test(paper_scale).min(10_000);
    let grid = TimeGrid::new(config.env.tau, config.grid_points);
    let mut csv = String::from("learner,n,rho1,epsilon,beta,mean_ratio,std_ratio\n");
    for (value, factors) in sweep_cells(config) {
        let env = env_for(config, &factors)?;
        let per_trial: Vec<Vec<f64>> = (0..n_trials)
            .into_par_iter()
            .map(|trial| {
                let seed = config.base_seed + trial as u64;
                let dataset = generate_dataset(&env, factors.n, seed, None);
                opl_trial(config, &env, &grid, &dataset, seed, n_test).with_context(|| {
                    format!(
                        "opl sweep {}={value}, trial {trial}, seed {seed}",
                        config.sweep.name()
                    )
                })
            })
            .collect::<Result<_>>()?;
        for (i, name) in learner_names(config).iter().enumerate() {
            let ratios: Vec<f64> = per_trial.iter().map(|t| t[i]).collect();
            let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
            let std = (ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
                / ratios.len() as f64)
                .sqrt();
            csv.push_str(&format!(
                "{name},{},{},{},{},{:.10e},{:.10e}\n",
                factors.n, factors.rho1, factors.epsilon, factors.beta, mean, std
            ));
        }
    }
    let path = out_dir.join(format!("opl_{}.csv", config.sweep.name()));
    fs::write(&path, &csv).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(csv)
}

/// Constrained learning over `n_trials`: one row per learner with true RMST,
/// true expected cost and the feasible rate.
pub fn run_constrained(
    config: &ExperimentConfig,
    out_dir: &Path,
    paper_scale: bool,
) -> Result<String> {
    let n_trials = config.resolve_trials(RunMode::Constrained, paper_scale);
    let base_costs = config
        .env
        .base_costs
        .clone()
        .unwrap_or_else(|| EnvConfig::linear_base_costs(config.env.n_actions));
    let env_config = EnvConfig { base_costs: Some(base_costs.clone()), ..config.env.clone() };
    let cell = ExperimentConfig { env: env_config, ..config.clone() };
    let factors = Factors {
        n: cell.n,
        rho1: cell.env.target_censoring_rate,
        epsilon: cell.epsilon,
        beta: cell.env.beta,
    };
    let env = env_for(&cell, &factors)?;
    let grid = TimeGrid::new(cell.env.tau, cell.grid_points);

    // Budget from the logging policy's exact expected cost; cost evaluation
    // uses a fixed moderate context sample since the integrand is bounded.
    let cost_contexts = sample_contexts(env.d, 2_000, cell.truth_seed());
    let value_contexts = sample_contexts(env.d, cell.resolve_n_test(paper_scale).min(10_000), cell.truth_seed());
    let logging = env.logging_policy();
    let logging_cost = true_expected_cost(&env, &logging, &base_costs, &cost_contexts);
    let budget = cell.budget_ratio * logging_cost;

    let mut csv = String::from(
        "learner,budget,rmst_mean,rmst_std,cost_mean,cost_std,feasible_rate\n",
    );
    for &learner in &cell.learners {
        let runs: Vec<(f64, f64, bool)> = (0..n_trials)
            .into_par_iter()
            .map(|trial| -> Result<(f64, f64, bool)> {
                let seed = cell.base_seed + trial as u64;
                let dataset = generate_dataset(&env, factors.n, seed, Some(&base_costs));
                let fitted = match cell.nuisance {
                    NuisanceMode::Oracle => None,
                    NuisanceMode::Fitted => Some(fit_nuisances(&dataset)?),
                };
                let logging = env.logging_policy();
                let oracle_s = OracleSurvivalCurve(&env);
                let oracle_g = OracleCensoringCurve(&env);
                let bundle = match &fitted {
                    None => NuisanceBundle::new(&logging)
                        .with_outcome(&oracle_s)
                        .with_censoring(&oracle_g)
                        .with_weight_floor(0.0),
                    Some(models) => NuisanceBundle::new(&models.propensity)
                        .with_outcome(&models.outcome)
                        .with_censoring(&models.censoring)
                        .with_weight_floor(cell.weight_floor),
                };
                let train =
                    ConstrainedConfig::new(learner, cell.objective, grid.clone(), budget, seed);
                let result = train_constrained(&dataset, &bundle, &train)
                    .with_context(|| format!("constrained trial {trial}, seed {seed}"))?;
                if result.trace.iter().any(|p| p.lambda < 0.0) {
                    return Err(anyhow!("negative multiplier in trial {trial} (seed {seed})"));
                }
                let rmst =
                    true_policy_value_on_contexts(&env, &result.policy, &grid, &value_contexts);
                let cost = true_expected_cost(&env, &result.policy, &base_costs, &cost_contexts);
                Ok((rmst, cost, cost <= budget))
            })
            .collect::<Result<_>>()?;
        let mean = |sel: &dyn Fn(&(f64, f64, bool)) -> f64| {
            runs.iter().map(|r| sel(r)).sum::<f64>() / runs.len() as f64
        };
        let std = |sel: &dyn Fn(&(f64, f64, bool)) -> f64, m: f64| {
            (runs.iter().map(|r| (sel(r) - m) * (sel(r) - m)).sum::<f64>() / runs.len() as f64)
                .sqrt()
        };
        let rmst_mean = mean(&|r| r.0);
        let cost_mean = mean(&|r| r.1);
        let feasible = runs.iter().filter(|r| r.2).count() as f64 / runs.len() as f64;
        csv.push_str(&format!(
            "{learner},{budget:.6},{rmst_mean:.6},{:.6},{cost_mean:.6},{:.6},{feasible:.4}\n",
            std(&|r| r.0, rmst_mean),
            std(&|r| r.1, cost_mean),
        ));
    }
    let path = out_dir.join("constrained.csv");
    fs::write(&path, &csv).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(csv)
}
