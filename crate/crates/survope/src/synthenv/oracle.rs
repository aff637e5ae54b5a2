//! Ground-truth oracles: closed-form survival and censoring curves, the
//! restricted-mean value they imply, and the oracle-greedy evaluation policy.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::core::rng::{stream, stream_ids};
use crate::core::{Policy, TimeGrid};
use crate::synthenv::EnvParams;

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Survival function of `LogNormal(mu, sigma^2)`: `P(L > t)`.
pub fn lognormal_survival(mu: f64, sigma: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    1.0 - normal_cdf((t.ln() - mu) / sigma)
}

/// True survival probability `S(x, a, t) = P(L > t | x, a)`.
pub fn true_survival(env: &EnvParams, context: &[f64], action: usize, t: f64) -> f64 {
    lognormal_survival(env.survival_location(context, action), env.sigma_l, t)
}

/// True censoring survival `G(t | x, a) = P(C > t | x, a) = exp(-t / scale)`.
pub fn true_censoring_survival(env: &EnvParams, context: &[f64], action: usize, t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    (-t / env.censoring_scale(context, action)).exp()
}

/// True per-arm restricted mean survival time: the trapezoidal integral of
/// `S(x, a, .)` over `[0, tau]`, with the origin contributing `S(0) = 1`.
pub fn true_rmst(env: &EnvParams, context: &[f64], action: usize, grid: &TimeGrid) -> f64 {
    let mu = env.survival_location(context, action);
    let mut values = Vec::with_capacity(grid.m() + 1);
    values.push(1.0);
    for j in 1..=grid.m() {
        values.push(lognormal_survival(mu, env.sigma_l, grid.point(j)));
    }
    grid.trapezoid(&values)
}

/// Draws `n` standard-normal contexts from the truth stream of `seed`.
pub fn sample_contexts(d: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, stream_ids::TRUTH_BASE);
    (0..n)
        .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

/// Monte Carlo policy value on a fixed context set:
/// `mean_x sum_a pi(a|x) * rmst(x, a)`. Sharing the contexts between two
/// policies gives common-random-number comparisons.
pub fn true_policy_value_on_contexts(
    env: &EnvParams,
    policy: &dyn Policy,
    grid: &TimeGrid,
    contexts: &[Vec<f64>],
) -> f64 {
    assert!(!contexts.is_empty());
    let mut total = 0.0;
    for x in contexts {
        let probs = policy.probs(x);
        for (a, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                total += p * true_rmst(env, x, a, grid);
            }
        }
    }
    total / contexts.len() as f64
}

/// Monte Carlo ground-truth policy value over `n_test` fresh contexts.
pub fn true_policy_value(
    env: &EnvParams,
    policy: &dyn Policy,
    grid: &TimeGrid,
    n_test: usize,
    seed: u64,
) -> f64 {
    let contexts = sample_contexts(env.d, n_test, seed);
    true_policy_value_on_contexts(env, policy, grid, &contexts)
}

/// Probability that a latent event is observed, `P(L <= C | x, a)`.
///
/// Conditioning on the log-normal draw gives
/// `E_z[ phi(z) * G(exp(mu + sigma z) | x, a) ]`, a smooth one-dimensional
/// integral evaluated by a dense trapezoid over `z in [-8, 8]`.
pub fn true_event_probability(env: &EnvParams, context: &[f64], action: usize) -> f64 {
    let mu = env.survival_location(context, action);
    let scale = env.censoring_scale(context, action);
    let n = 400;
    let (lo, hi) = (-8.0, 8.0);
    let h = (hi - lo) / n as f64;
    let integrand = |z: f64| -> f64 {
        let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        density * (-(mu + env.sigma_l * z).exp() / scale).exp()
    };
    let mut total = 0.5 * (integrand(lo) + integrand(hi));
    for i in 1..n {
        total += integrand(lo + h * i as f64);
    }
    total * h
}

/// Exact expected per-decision cost of a policy when `base_costs[a]` is
/// charged only on event records: `mean_x sum_a pi(a|x) c_a P(event | x, a)`.
pub fn true_expected_cost(
    env: &EnvParams,
    policy: &dyn Policy,
    base_costs: &[f64],
    contexts: &[Vec<f64>],
) -> f64 {
    assert!(!contexts.is_empty());
    let mut total = 0.0;
    for x in contexts {
        let probs = policy.probs(x);
        for (a, &p) in probs.iter().enumerate() {
            if p > 0.0 && base_costs[a] > 0.0 {
                total += p * base_costs[a] * true_event_probability(env, x, a);
            }
        }
    }
    total / contexts.len() as f64
}

/// Epsilon-greedy over the oracle per-arm restricted mean:
/// `(1 - eps) + eps/K` on the per-context argmax arm, `eps/K` elsewhere.
/// Ties break toward the lowest action index.
#[derive(Debug, Clone)]
pub struct OracleEpsilonGreedyPolicy {
    env: EnvParams,
    epsilon: f64,
}

impl OracleEpsilonGreedyPolicy {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// The oracle-greedy action for one context: the argmax of the per-arm
    /// restricted mean, ties toward the lowest index.
    ///
    /// With a shared log-normal scale the survival curve is strictly
    /// increasing in the location at every `t > 0`, so the restricted-mean
    /// argmax equals the location argmax and no integral is needed.
    pub fn greedy_action(&self, context: &[f64]) -> usize {
        let mut best = 0;
        let mut best_value = f64::NEG_INFINITY;
        for a in 0..self.env.n_actions {
            let v = self.env.survival_location(context, a);
            if v > best_value {
                best_value = v;
                best = a;
            }
        }
        best
    }
}

impl Policy for OracleEpsilonGreedyPolicy {
    fn n_actions(&self) -> usize {
        self.env.n_actions
    }

    fn probs(&self, context: &[f64]) -> Vec<f64> {
        let k = self.env.n_actions;
        let mut probs = vec![self.epsilon / k as f64; k];
        probs[self.greedy_action(context)] += 1.0 - self.epsilon;
        probs
    }
}

/// The evaluation policy used across experiments.
pub fn make_eval_policy(env: &EnvParams, epsilon: f64, _grid: &TimeGrid) -> OracleEpsilonGreedyPolicy {
    assert!((0.0..=1.0).contains(&epsilon), "epsilon must lie in [0,1]");
    OracleEpsilonGreedyPolicy { env: env.clone(), epsilon }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::rng::stream;
    use crate::core::UniformPolicy;
    use crate::synthenv::{generate_with_latents, make_env, EnvConfig};

    fn env() -> EnvParams {
        let config = EnvConfig { d: 3, n_actions: 4, ..EnvConfig::default() };
        make_env(1, &config).unwrap()
    }

    #[test]
    fn survival_hits_median_and_origin() {
        let env = env();
        let x = vec![0.4, -0.2, 1.0];
        for a in 0..env.n_actions {
            let median = env.survival_location(&x, a).exp();
            assert!((true_survival(&env, &x, a, median) - 0.5).abs() < 1e-12);
            assert_eq!(true_survival(&env, &x, a, 0.0), 1.0);
        }
    }

    #[test]
    fn censoring_survival_hits_median_and_origin() {
        let env = env();
        let x = vec![-0.7, 0.1, 0.3];
        let scale = env.censoring_scale(&x, 2);
        assert!((true_censoring_survival(&env, &x, 2, scale * 2f64.ln()) - 0.5).abs() < 1e-12);
        assert_eq!(true_censoring_survival(&env, &x, 2, 0.0), 1.0);
    }

    #[test]
    fn survival_curves_are_monotone_and_bounded() {
        let env = env();
        let x = vec![1.2, 0.0, -0.5];
        let grid = TimeGrid::new(env.tau, 200);
        let mut prev = 1.0;
        for j in 1..=grid.m() {
            let s = true_survival(&env, &x, 1, grid.point(j));
            assert!(s <= prev + 1e-15 && (0.0..=1.0).contains(&s));
            prev = s;
        }
    }

    #[test]
    fn empirical_latents_match_analytic_curves() {
        // P(L > t), P(C > t) and the product identity P(T > t) = S * G,
        // all against 1e6 Monte Carlo draws at fixed t.
        let config = EnvConfig { d: 3, n_actions: 4, ..EnvConfig::default() };
        let env = make_env(4, &config).unwrap();
        let (_, samples) = generate_with_latents(&env, 1_000_000, 21, None);
        let t = 1.0;
        // Bucket by (x, a) is impossible (continuous x); instead check the
        // marginal identity E[1{T>t}] = E[S(x,a,t) G(t|x,a)] over the draws.
        let mut obs = 0.0;
        let mut pred = 0.0;
        for s in &samples {
            if s.record.observed_time > t {
                obs += 1.0;
            }
            pred += true_survival(&env, &s.record.context, s.record.action, t)
                * true_censoring_survival(&env, &s.record.context, s.record.action, t);
        }
        let n = samples.len() as f64;
        assert!((obs / n - pred / n).abs() < 0.003, "obs {} pred {}", obs / n, pred / n);

        // Per-fixed-(x,a) check: empirical survival of fresh draws.
        let x = vec![0.5, -1.0, 0.25];
        let a = 1;
        let mu = env.survival_location(&x, a);
        let mut rng = stream(99, 7);
        let n = 1_000_000;
        let mut alive = 0u64;
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            if (mu + env.sigma_l * z).exp() > t {
                alive += 1;
            }
        }
        let emp = alive as f64 / n as f64;
        assert!((emp - true_survival(&env, &x, a, t)).abs() < 0.002);
    }

    #[test]
    fn rmst_matches_dense_quadrature() {
        // Log-normal(0, 1) survival integrated to tau = 2.
        let grid = TimeGrid::new(2.0, 100);
        let coarse = {
            let mut vals = vec![1.0];
            vals.extend((1..=100).map(|j| lognormal_survival(0.0, 1.0, grid.point(j))));
            grid.trapezoid(&vals)
        };
        let dense_grid = TimeGrid::new(2.0, 10_000);
        let dense = {
            let mut vals = vec![1.0];
            vals.extend((1..=10_000).map(|j| lognormal_survival(0.0, 1.0, dense_grid.point(j))));
            dense_grid.trapezoid(&vals)
        };
        assert!((coarse - dense).abs() < 1e-3, "coarse {coarse} dense {dense}");
    }

    #[test]
    fn rmst_grid_refinement_is_stable() {
        let env = env();
        let x = vec![0.1, 0.9, -0.4];
        for a in 0..env.n_actions {
            let m100 = true_rmst(&env, &x, a, &TimeGrid::new(env.tau, 100));
            let m200 = true_rmst(&env, &x, a, &TimeGrid::new(env.tau, 200));
            assert!((m100 - m200).abs() < 1e-3);
        }
    }

    #[test]
    fn rmst_of_unit_survival_is_tau() {
        let mut env = env();
        // Push the location far out so S ~ 1 on [0, tau].
        env.mu_mean = -1000.0;
        let grid = TimeGrid::new(env.tau, 100);
        let v = true_rmst(&env, &[0.0, 0.0, 0.0], 0, &grid);
        assert!((v - env.tau).abs() < 1e-9, "v={v}");
    }

    #[test]
    fn policy_value_is_linear_in_policy() {
        let env = env();
        let grid = TimeGrid::new(env.tau, 100);
        let contexts = sample_contexts(env.d, 500, 3);
        let uniform = UniformPolicy { n_actions: env.n_actions };
        let uniform_value = true_policy_value_on_contexts(&env, &uniform, &grid, &contexts);
        let mean_of_arms: f64 = (0..env.n_actions)
            .map(|a| {
                contexts.iter().map(|x| true_rmst(&env, x, a, &grid)).sum::<f64>()
                    / contexts.len() as f64
            })
            .sum::<f64>()
            / env.n_actions as f64;
        assert!((uniform_value - mean_of_arms).abs() < 1e-12);
    }

    #[test]
    fn policy_value_seeds_agree_within_monte_carlo_error() {
        let env = env();
        let grid = TimeGrid::new(env.tau, 100);
        let uniform = UniformPolicy { n_actions: env.n_actions };
        let n = 100_000;
        let va = true_policy_value(&env, &uniform, &grid, n, 1000);
        let vb = true_policy_value(&env, &uniform, &grid, n, 2000);
        // Conservative bound: values live in [0, tau], so se <= tau/2/sqrt(n).
        let se = env.tau / 2.0 / (n as f64).sqrt();
        assert!((va - vb).abs() < 3.0 * 2.0f64.sqrt() * se, "va {va} vb {vb}");
    }

    #[test]
    fn event_probability_matches_latent_monte_carlo() {
        let env = env();
        let x = vec![0.3, -0.6, 0.9];
        let a = 2;
        let analytic = true_event_probability(&env, &x, a);
        let mu = env.survival_location(&x, a);
        let scale = env.censoring_scale(&x, a);
        let mut rng = stream(123, 9);
        let n = 500_000;
        let mut events = 0u64;
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let l = (mu + env.sigma_l * z).exp();
            let u: f64 = rng.random();
            let c = scale * (-(1.0 - u).ln());
            if l <= c {
                events += 1;
            }
        }
        let mc = events as f64 / n as f64;
        assert!((analytic - mc).abs() < 0.003, "analytic {analytic} mc {mc}");
    }

    #[test]
    fn expected_cost_is_linear_in_policy_and_costs() {
        let env = env();
        let contexts = sample_contexts(env.d, 300, 5);
        let costs = vec![0.0, 1.0, 2.0, 3.0];
        let uniform = UniformPolicy { n_actions: env.n_actions };
        let uniform_cost = true_expected_cost(&env, &uniform, &costs, &contexts);
        let per_arm: f64 = (1..env.n_actions)
            .map(|a| {
                costs[a]
                    * contexts
                        .iter()
                        .map(|x| true_event_probability(&env, x, a))
                        .sum::<f64>()
                    / contexts.len() as f64
            })
            .sum::<f64>()
            / env.n_actions as f64;
        assert!((uniform_cost - per_arm).abs() < 1e-10);
    }

    #[test]
    fn greedy_action_equals_rmst_argmax() {
        let env = env();
        let grid = TimeGrid::new(env.tau, 100);
        let policy = make_eval_policy(&env, 0.1, &grid);
        let contexts = sample_contexts(env.d, 500, 77);
        for x in &contexts {
            let by_rmst = (0..env.n_actions)
                .map(|a| true_rmst(&env, x, a, &grid))
                .enumerate()
                .max_by(|(_, u), (_, v)| u.partial_cmp(v).unwrap())
                .map(|(a, _)| a)
                .unwrap();
            assert_eq!(policy.greedy_action(x), by_rmst);
        }
    }

    #[test]
    fn eval_policy_formula_and_limits() {
        let env = env();
        let grid = TimeGrid::new(env.tau, 100);
        let x = vec![0.3, 0.3, -0.8];

        let uniform = make_eval_policy(&env, 1.0, &grid);
        for p in uniform.probs(&x) {
            assert!((p - 0.25).abs() < 1e-12);
        }

        let greedy = make_eval_policy(&env, 0.0, &grid);
        let p = greedy.probs(&x);
        let argmax = greedy.greedy_action(&x);
        assert_eq!(p[argmax], 1.0);
        assert_eq!(p.iter().sum::<f64>(), 1.0);

        let eps = make_eval_policy(&env, 0.1, &grid);
        let p = eps.probs(&x);
        assert!((p[eps.greedy_action(&x)] - (0.9 + 0.1 / 4.0)).abs() < 1e-12);
        let others: Vec<f64> =
            (0..4).filter(|&a| a != eps.greedy_action(&x)).map(|a| p[a]).collect();
        for o in others {
            assert!((o - 0.025).abs() < 1e-12);
        }
    }
}
