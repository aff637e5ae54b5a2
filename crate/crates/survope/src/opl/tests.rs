use super::*;
use crate::core::rng::stream;
use crate::core::{Policy, TimeGrid};
use crate::estimators::{ConstantCurve, NuisanceBundle, OracleCensoringCurve, OracleSurvivalCurve};
use crate::synthenv::{
    generate_dataset, make_env, make_eval_policy, true_rmst, true_survival, EnvConfig, EnvParams,
};
use rand::Rng;
use rand_distr::StandardNormal;

fn small_env(rate: f64) -> EnvParams {
    let config = EnvConfig { d: 3, n_actions: 4, target_censoring_rate: rate, ..EnvConfig::default() };
    make_env(1, &config).unwrap()
}

/// A hand-built two-action environment where action 0 strictly dominates:
/// the location gap is `(20 x^2 + 0.2) / mu_std > 0` for every context.
fn dominant_action_env() -> EnvParams {
    EnvParams {
        seed: 0,
        d: 1,
        n_actions: 2,
        beta: 1.0,
        theta_pi: vec![0.0, 0.0],
        theta_l: vec![0.0, 1.0, -1.0, 0.0, 0.0],
        theta_c: vec![0.0; 5],
        sigma_l: 0.5,
        rho0: -0.4,
        delta_c: 0.0,
        mu_mean: 2.0,
        mu_std: 5.0,
        tau: 2.0,
        target_censoring_rate: 0.3,
        base_costs: None,
    }
}

fn mlp(env: &EnvParams, seed: u64) -> MlpPolicy {
    let mut rng = stream(seed, 7);
    MlpPolicy::new(env.d, env.n_actions, &[16, 16], &mut rng)
}

#[test]
fn rmst_gradient_matches_finite_differences_of_value() {
    use crate::core::DifferentiablePolicy;
    let env = small_env(0.3);
    let data = generate_dataset(&env, 300, 3, None);
    let logging = env.logging_policy();
    let oracle_s = OracleSurvivalCurve(&env);
    let oracle_g = OracleCensoringCurve(&env);
    let bundle = NuisanceBundle::new(&logging)
        .with_outcome(&oracle_s)
        .with_censoring(&oracle_g)
        .with_weight_floor(0.0);
    let grid = TimeGrid::new(env.tau, 30);
    let integrals =
        precompute_rmst_integrals(&data, &bundle, GradientEstimator::IpcwDr, &grid).unwrap();
    let indices: Vec<usize> = (0..data.len()).collect();
    let policy = mlp(&env, 1);
    let grad = rmst_gradient(&policy, &data, &integrals, &indices, None);

    let mut rng = stream(41, 0);
    let flat = policy.params();
    for _ in 0..20 {
        let idx = rng.random_range(0..policy.n_params());
        let h = 1e-5;
        let mut plus = policy.clone();
        let mut p = flat.clone();
        p[idx] += h;
        plus.set_params(&p);
        let mut minus = policy.clone();
        p[idx] -= 2.0 * h;
        minus.set_params(&p);
        let fd = (rmst_value(&plus, &data, &integrals, &indices)
            - rmst_value(&minus, &data, &integrals, &indices))
            / (2.0 * h);
        let denom = fd.abs().max(1e-8);
        assert!(
            (grad[idx] - fd).abs() / denom < 1e-3,
            "component {idx}: analytic {} fd {fd}",
            grad[idx]
        );
    }
}

#[test]
fn unit_censoring_collapses_gradient_to_naive() {
    let env = small_env(0.3);
    let data = generate_dataset(&env, 400, 5, None);
    let logging = env.logging_policy();
    let unit = ConstantCurve(1.0);
    let oracle_s = OracleSurvivalCurve(&env);
    let bundle = NuisanceBundle::new(&logging)
        .with_outcome(&oracle_s)
        .with_censoring(&unit)
        .with_weight_floor(0.0);
    let policy = mlp(&env, 2);
    let t = 1.0;
    let ipcw = gradient_at(&policy, &data, &bundle, GradientEstimator::IpcwIps, t).unwrap();
    let naive = gradient_at(&policy, &data, &bundle, GradientEstimator::Ips, t).unwrap();
    assert_eq!(ipcw, naive);
    let ipcw_dr = gradient_at(&policy, &data, &bundle, GradientEstimator::IpcwDr, t).unwrap();
    let naive_dr = gradient_at(&policy, &data, &bundle, GradientEstimator::Dr, t).unwrap();
    assert_eq!(ipcw_dr, naive_dr);
}

#[test]
fn zero_outcome_collapses_dr_gradient_to_ips() {
    let env = small_env(0.3);
    let data = generate_dataset(&env, 400, 6, None);
    let logging = env.logging_policy();
    let zero = ConstantCurve(0.0);
    let oracle_g = OracleCensoringCurve(&env);
    let bundle = NuisanceBundle::new(&logging)
        .with_outcome(&zero)
        .with_censoring(&oracle_g)
        .with_weight_floor(0.0);
    let policy = mlp(&env, 3);
    let t = 0.8;
    let dr = gradient_at(&policy, &data, &bundle, GradientEstimator::IpcwDr, t).unwrap();
    let ips = gradient_at(&policy, &data, &bundle, GradientEstimator::IpcwIps, t).unwrap();
    assert_eq!(dr, ips);
}

#[test]
fn fully_censored_batch_has_zero_ips_gradient() {
    let env = small_env(0.3);
    let data = generate_dataset(&env, 200, 7, None);
    let logging = env.logging_policy();
    let oracle_g = OracleCensoringCurve(&env);
    let bundle =
        NuisanceBundle::new(&logging).with_censoring(&oracle_g).with_weight_floor(0.0);
    let policy = mlp(&env, 4);
    // Past every observed time the indicator is zero everywhere.
    let t_max = data.records().iter().map(|r| r.observed_time).fold(0.0, f64::max);
    let grad =
        gradient_at(&policy, &data, &bundle, GradientEstimator::IpcwIps, t_max + 1.0).unwrap();
    assert!(grad.iter().all(|&g| g == 0.0));
}

#[test]
fn true_gradient_vanishes_for_saturated_survival() {
    // Push the location so far out that S(x, a, t) == 1 in f64 on the whole
    // horizon: the score-function identity then zeroes the gradient exactly.
    let mut env = small_env(0.3);
    env.mu_mean = -1000.0;
    let policy = mlp(&env, 5);
    let grad = true_policy_gradient_at(&env, &policy, 1.0, 200, 9);
    let max = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    assert!(max < 1e-14, "max component {max}");
}

#[test]
fn true_gradient_matches_directional_finite_differences() {
    use crate::core::DifferentiablePolicy;
    let env = small_env(0.3);
    let policy = mlp(&env, 6);
    let t = 1.0;
    let n_mc = 5_000;
    let seed = 123;
    let grad = true_policy_gradient_at(&env, &policy, t, n_mc, seed);

    // Shared contexts make the finite difference exact up to truncation.
    let value = |p: &MlpPolicy| -> f64 {
        let contexts = crate::synthenv::sample_contexts(env.d, n_mc, seed);
        let mut total = 0.0;
        for x in &contexts {
            let probs = p.probs(x);
            for (a, &pa) in probs.iter().enumerate() {
                total += pa * true_survival(&env, x, a, t);
            }
        }
        total / n_mc as f64
    };

    let mut rng = stream(77, 3);
    let flat = policy.params();
    for _ in 0..5 {
        let direction: Vec<f64> = (0..policy.n_params())
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
        let h = 1e-5;
        let perturb = |sign: f64| -> f64 {
            let mut p = policy.clone();
            let moved: Vec<f64> =
                flat.iter().zip(&direction).map(|(v, d)| v + sign * h * d / norm).collect();
            p.set_params(&moved);
            value(&p)
        };
        let fd = (perturb(1.0) - perturb(-1.0)) / (2.0 * h);
        let analytic: f64 = grad.iter().zip(&direction).map(|(g, d)| g * d / norm).sum();
        let denom = fd.abs().max(1e-10);
        assert!((analytic - fd).abs() / denom < 1e-2, "analytic {analytic} fd {fd}");
    }
}

#[test]
fn lagrangian_with_zero_multiplier_equals_unconstrained_gradient() {
    let env = small_env(0.3);
    let costs = EnvConfig::linear_base_costs(env.n_actions);
    let data = generate_dataset(&env, 300, 8, Some(&costs));
    let logging = env.logging_policy();
    let oracle_g = OracleCensoringCurve(&env);
    let bundle =
        NuisanceBundle::new(&logging).with_censoring(&oracle_g).with_weight_floor(0.0);
    let grid = TimeGrid::new(env.tau, 25);
    let integrals =
        precompute_rmst_integrals(&data, &bundle, GradientEstimator::IpcwIps, &grid).unwrap();
    let indices: Vec<usize> = (0..data.len()).collect();
    let policy = mlp(&env, 9);
    let unconstrained = rmst_gradient(&policy, &data, &integrals, &indices, None);
    let lagrangian =
        rmst_gradient(&policy, &data, &integrals, &indices, Some((0.0, Objective::Maximize)));
    assert_eq!(unconstrained, lagrangian);
}

#[test]
fn zero_learning_rate_returns_initialization() {
    let env = small_env(0.3);
    let data = generate_dataset(&env, 500, 10, None);
    let logging = env.logging_policy();
    let oracle_g = OracleCensoringCurve(&env);
    let bundle =
        NuisanceBundle::new(&logging).with_censoring(&oracle_g).with_weight_floor(0.0);
    let grid = TimeGrid::new(env.tau, 25);
    let mut config = TrainConfig::new(GradientEstimator::IpcwIps, grid, 42);
    config.learning_rate = 0.0;
    config.max_epochs = 15;
    config.hidden = vec![8, 8];
    let trained = train_policy(&data, &bundle, &config).unwrap();

    let mut init_rng = stream(42, crate::core::rng::stream_ids::TRAIN_BASE + 1);
    let init = MlpPolicy::new(data.d(), data.n_actions(), &config.hidden, &mut init_rng);
    assert_eq!(trained.policy.params(), init.params());
    // Early stopping kicked in after `patience` stagnant epochs.
    assert!(trained.epochs_run <= config.patience + 1);
}

#[test]
fn training_is_deterministic_in_seed() {
    let env = small_env(0.3);
    let data = generate_dataset(&env, 600, 11, None);
    let logging = env.logging_policy();
    let oracle_g = OracleCensoringCurve(&env);
    let bundle =
        NuisanceBundle::new(&logging).with_censoring(&oracle_g).with_weight_floor(0.0);
    let grid = TimeGrid::new(env.tau, 25);
    let mut config = TrainConfig::new(GradientEstimator::IpcwIps, grid, 5);
    config.max_epochs = 8;
    config.patience = 8;
    config.hidden = vec![8, 8];
    let a = train_policy(&data, &bundle, &config).unwrap();
    let b = train_policy(&data, &bundle, &config).unwrap();
    assert_eq!(a.policy.params(), b.policy.params());
    assert_eq!(a.validation_trace, b.validation_trace);
    config.seed = 6;
    let c = train_policy(&data, &bundle, &config).unwrap();
    assert_ne!(a.policy.params(), c.policy.params());
}

#[test]
fn dominant_action_is_recovered() {
    let env = dominant_action_env();
    let data = generate_dataset(&env, 3_000, 12, None);
    let logging = env.logging_policy();
    let oracle_s = OracleSurvivalCurve(&env);
    let oracle_g = OracleCensoringCurve(&env);
    let bundle = NuisanceBundle::new(&logging)
        .with_outcome(&oracle_s)
        .with_censoring(&oracle_g)
        .with_weight_floor(0.0);
    let grid = TimeGrid::new(env.tau, 50);
    let mut config = TrainConfig::new(GradientEstimator::IpcwDr, grid, 3);
    config.max_epochs = 60;
    let trained = train_policy(&data, &bundle, &config).unwrap();

    let contexts = crate::synthenv::sample_contexts(env.d, 1_000, 31);
    let confident = contexts
        .iter()
        .filter(|x| trained.policy.probs(x)[0] > 0.9)
        .count() as f64
        / contexts.len() as f64;
    assert!(confident >= 0.95, "dominant action confidence on {confident} of contexts");
}

#[test]
fn regression_policy_breaks_ties_low_and_matches_oracle_argmax() {
    let env = small_env(0.3);
    let grid = TimeGrid::new(env.tau, 50);

    let flat = ConstantCurve(0.5);
    let tied = RegressionPolicy::new(&flat, env.n_actions, grid.clone());
    assert_eq!(tied.best_action(&[0.1, 0.2, 0.3]), 0);

    let oracle_s = OracleSurvivalCurve(&env);
    let oracle_policy = RegressionPolicy::new(&oracle_s, env.n_actions, grid.clone());
    let contexts = crate::synthenv::sample_contexts(env.d, 200, 17);
    for x in &contexts {
        let by_truth = (0..env.n_actions)
            .map(|a| true_rmst(&env, x, a, &grid))
            .enumerate()
            .max_by(|(_, u), (_, v)| u.partial_cmp(v).unwrap())
            .map(|(a, _)| a)
            .unwrap();
        assert_eq!(oracle_policy.best_action(x), by_truth);
    }
}

#[test]
fn improvement_ratio_identity_and_oracle_dominance() {
    let env = small_env(0.3);
    let grid = TimeGrid::new(env.tau, 50);
    let logging = env.logging_policy();
    let ratio = evaluate_improvement(&env, &logging, &grid, 2_000, 19);
    assert_eq!(ratio, 1.0);

    let greedy = make_eval_policy(&env, 0.0, &grid);
    let ratio = evaluate_improvement(&env, &greedy, &grid, 2_000, 19);
    assert!(ratio >= 1.0 - 1e-9, "greedy ratio {ratio}");
}

#[test]
fn constrained_multiplier_stays_nonnegative_and_decays_under_slack_budget() {
    let env = small_env(0.3);
    let costs = EnvConfig::linear_base_costs(env.n_actions);
    let data = generate_dataset(&env, 1_000, 13, Some(&costs));
    let logging = env.logging_policy();
    let oracle_g = OracleCensoringCurve(&env);
    let bundle =
        NuisanceBundle::new(&logging).with_censoring(&oracle_g).with_weight_floor(0.0);
    let grid = TimeGrid::new(env.tau, 25);
    // Budget ten times the maximum cost: the constraint never binds.
    let budget = 10.0 * costs.iter().cloned().fold(0.0, f64::max);
    let mut config =
        ConstrainedConfig::new(GradientEstimator::IpcwIps, Objective::Maximize, grid, budget, 23);
    config.epochs = 12;
    config.hidden = vec![8, 8];
    let result = train_constrained(&data, &bundle, &config).unwrap();
    assert_eq!(result.trace.len(), config.epochs);
    assert!(result.trace.iter().all(|p| p.lambda >= 0.0));
    assert!(result.trace.last().unwrap().lambda < 0.01);
}

#[test]
fn constrained_training_requires_costs() {
    let env = small_env(0.3);
    let data = generate_dataset(&env, 100, 14, None);
    let logging = env.logging_policy();
    let oracle_g = OracleCensoringCurve(&env);
    let bundle = NuisanceBundle::new(&logging).with_censoring(&oracle_g);
    let grid = TimeGrid::new(env.tau, 25);
    let config =
        ConstrainedConfig::new(GradientEstimator::IpcwIps, Objective::Maximize, grid, 1.0, 1);
    assert!(train_constrained(&data, &bundle, &config).is_err());
}
