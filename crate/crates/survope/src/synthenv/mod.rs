//! Synthetic survival environment with controllable, covariate-dependent
//! censoring.
//!
//! Contexts are standard normal, actions come from a softmax-linear logging
//! policy, latent survival times are log-normal with a location that mixes a
//! linear term over joint features with action-dependent interaction terms,
//! and censoring times are exponential with a scale coupled to the survival
//! location. The censoring-rate intercept is calibrated by binary search so
//! the marginal censored fraction hits a requested target.
//!
//! Because the whole environment is frozen at construction (weights, the
//! standardization moments of the survival location and the calibrated
//! intercept), every ground-truth quantity is a fixed function available to
//! test oracles regardless of dataset size.

mod generate;
mod oracle;

pub use generate::{generate_dataset, generate_with_latents, EnvSample};
pub use oracle::{
    lognormal_survival, make_eval_policy, normal_cdf, sample_contexts, true_censoring_survival,
    true_event_probability, true_expected_cost, true_policy_value, true_policy_value_on_contexts,
    true_rmst, true_survival, OracleEpsilonGreedyPolicy,
};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::core::rng::{stream, stream_ids};
use crate::core::{sample_action, SoftmaxLinearPolicy};
use crate::error::{Error, Result};

/// Size of the frozen reference sample used for standardization moments and
/// censoring calibration.
pub const REFERENCE_SAMPLE_SIZE: usize = 100_000;

/// Bracket and iteration budget for the censoring-intercept binary search.
const CALIBRATION_BRACKET: (f64, f64) = (-20.0, 20.0);
const CALIBRATION_MAX_ITERS: usize = 60;
/// The calibrated intercept must land the reference censored fraction within
/// this distance of the target.
const CALIBRATION_TOLERANCE: f64 = 0.01;

/// User-facing environment configuration. Serializable as JSON or TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub d: usize,
    pub n_actions: usize,
    pub beta: f64,
    pub sigma_l: f64,
    pub rho0: f64,
    pub tau: f64,
    pub target_censoring_rate: f64,
    /// Per-action base costs used by constrained learning; cost is charged
    /// only on event records.
    pub base_costs: Option<Vec<f64>>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            d: 10,
            n_actions: 10,
            beta: 1.0,
            sigma_l: 1.0,
            rho0: -0.4,
            tau: 2.0,
            target_censoring_rate: 0.3,
            base_costs: None,
        }
    }
}

impl EnvConfig {
    /// Linearly increasing per-action costs `0, 0.5, .., (K-1)/2`, the default
    /// cost vector for constrained experiments.
    pub fn linear_base_costs(n_actions: usize) -> Vec<f64> {
        (0..n_actions).map(|a| a as f64 * 0.5).collect()
    }
}

/// A frozen synthetic environment: every weight, the standardization moments
/// of the survival location and the calibrated censoring intercept.
///
/// Identical `(seed, config)` pairs construct identical `EnvParams`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    pub seed: u64,
    pub d: usize,
    pub n_actions: usize,
    pub beta: f64,
    /// Logging-policy weights, row-major `(d, n_actions)`.
    pub theta_pi: Vec<f64>,
    /// Survival-location weights over the joint feature map, length `d + K + d*K`.
    pub theta_l: Vec<f64>,
    /// Censoring weights over the joint feature map, length `d + K + d*K`.
    pub theta_c: Vec<f64>,
    pub sigma_l: f64,
    pub rho0: f64,
    /// Calibrated censoring-rate intercept.
    pub delta_c: f64,
    /// Standardization moments of the raw survival location, frozen from the
    /// reference sample.
    pub mu_mean: f64,
    pub mu_std: f64,
    pub tau: f64,
    pub target_censoring_rate: f64,
    pub base_costs: Option<Vec<f64>>,
}

/// Joint feature map: `[x, one_hot(a), interaction]` where the interaction
/// segment has `K` blocks of length `d` and block `a` holds `x`.
pub fn feature_map(context: &[f64], action: usize, d: usize, n_actions: usize) -> Vec<f64> {
    assert_eq!(context.len(), d, "context dimension mismatch");
    assert!(action < n_actions, "action out of range");
    let mut phi = vec![0.0; d + n_actions + d * n_actions];
    phi[..d].copy_from_slice(context);
    phi[d + action] = 1.0;
    let block = d + n_actions + action * d;
    phi[block..block + d].copy_from_slice(context);
    phi
}

impl EnvParams {
    /// `weights . phi(x, a)` without materializing the feature vector; these
    /// dots sit inside every survival and censoring evaluation.
    fn feature_dot(&self, weights: &[f64], context: &[f64], action: usize) -> f64 {
        let d = self.d;
        let mut acc = weights[d + action];
        for (j, &xj) in context.iter().enumerate() {
            acc += weights[j] * xj + weights[d + self.n_actions + action * d + j] * xj;
        }
        acc
    }

    /// Raw (unstandardized) survival location: a small linear term over the
    /// joint features plus an action-dependent interaction whose sign flips
    /// with action parity. The interaction indices cycle with the action:
    /// `j = a mod d`, `k = (a+1) mod d`, `m = (a+2) mod d`.
    pub fn survival_location_raw(&self, context: &[f64], action: usize) -> f64 {
        let linear = 0.1 * self.feature_dot(&self.theta_l, context, action);
        let j = action % self.d;
        let k = (action + 1) % self.d;
        let m = (action + 2) % self.d;
        let sign = if action % 2 == 0 { 1.0 } else { -1.0 };
        linear + 5.0 * sign * (context[j] * context[k] + context[m] * context[m])
    }

    /// Standardized survival location `mu_L(x, a)`, the log-normal location of
    /// the latent event time.
    pub fn survival_location(&self, context: &[f64], action: usize) -> f64 {
        (self.survival_location_raw(context, action) - self.mu_mean) / self.mu_std + 0.5
    }

    /// Scale (mean) of the exponential censoring time:
    /// `log lambda0 = theta_c . phi + rho0 * mu_L + delta_c`.
    ///
    /// With `rho0 < 0`, longer-surviving pairs get earlier censoring, giving
    /// covariate-dependent censoring.
    pub fn censoring_scale(&self, context: &[f64], action: usize) -> f64 {
        let mu = self.survival_location(context, action);
        (self.feature_dot(&self.theta_c, context, action) + self.rho0 * mu + self.delta_c).exp()
    }

    /// The softmax-linear logging policy this environment logs under.
    pub fn logging_policy(&self) -> SoftmaxLinearPolicy {
        SoftmaxLinearPolicy::new(self.d, self.n_actions, self.beta, self.theta_pi.clone())
    }
}

/// Builds a frozen environment: draws weights, freezes the standardization
/// moments from a reference sample of [`REFERENCE_SAMPLE_SIZE`] pairs and
/// calibrates the censoring intercept to `config.target_censoring_rate`.
pub fn make_env(seed: u64, config: &EnvConfig) -> Result<EnvParams> {
    let rate = config.target_censoring_rate;
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::InvalidRecord(format!(
            "target censoring rate must lie in (0,1), got {rate}"
        )));
    }
    let (d, k) = (config.d, config.n_actions);
    let n_features = d + k + d * k;

    let uniform_vec = |stream_id: u64, len: usize| -> Vec<f64> {
        let mut rng = stream(seed, stream_ids::ENV_BASE + stream_id);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    };
    let theta_pi = uniform_vec(0, d * k);
    let theta_l = uniform_vec(1, n_features);
    let theta_c = uniform_vec(2, n_features);

    let mut env = EnvParams {
        seed,
        d,
        n_actions: k,
        beta: config.beta,
        theta_pi,
        theta_l,
        theta_c,
        sigma_l: config.sigma_l,
        rho0: config.rho0,
        delta_c: 0.0,
        mu_mean: 0.0,
        mu_std: 1.0,
        tau: config.tau,
        target_censoring_rate: rate,
        base_costs: config.base_costs.clone(),
    };

    // Reference (x, a) pairs under the logging policy.
    let logging = env.logging_policy();
    let mut ref_rng = stream(seed, stream_ids::ENV_BASE + 3);
    let mut pairs = Vec::with_capacity(REFERENCE_SAMPLE_SIZE);
    for _ in 0..REFERENCE_SAMPLE_SIZE {
        let x: Vec<f64> = (0..d).map(|_| ref_rng.sample::<f64, _>(StandardNormal)).collect();
        let a = sample_action(&mut ref_rng, &crate::core::Policy::probs(&logging, &x));
        pairs.push((x, a));
    }

    // Freeze standardization moments of the raw location.
    let raw: Vec<f64> = pairs.iter().map(|(x, a)| env.survival_location_raw(x, *a)).collect();
    let n = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let var = raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(Error::Fit("degenerate survival-location distribution".into()));
    }
    env.mu_mean = mean;
    env.mu_std = var.sqrt();

    env.delta_c = calibrate_censoring_intercept(&env, &pairs, rate)?;
    Ok(env)
}

/// Calibrates the censoring intercept by bisection on common random numbers.
///
/// For each reference pair the latent log survival time and the standard
/// exponential censoring draw are fixed up front, so the censored fraction is
/// an exact non-increasing step function of the intercept and the search is
/// noise-free. A record is censored iff
/// `delta < log L - (theta_c . phi + rho0 * mu_L) - log e`.
fn calibrate_censoring_intercept(
    env: &EnvParams,
    pairs: &[(Vec<f64>, usize)],
    target: f64,
) -> Result<f64> {
    let mut cal_rng = stream(env.seed, stream_ids::ENV_BASE + 4);
    let thresholds: Vec<f64> = pairs
        .iter()
        .map(|(x, a)| {
            let mu = env.survival_location(x, *a);
            let z: f64 = cal_rng.sample(StandardNormal);
            let u: f64 = cal_rng.random();
            let log_l = mu + env.sigma_l * z;
            let base = env.feature_dot(&env.theta_c, x, *a) + env.rho0 * mu;
            log_l - base - (-(1.0 - u).ln()).ln()
        })
        .collect();

    let censored_fraction =
        |delta: f64| thresholds.iter().filter(|&&q| delta < q).count() as f64 / thresholds.len() as f64;

    let (mut lo, mut hi) = CALIBRATION_BRACKET;
    let (f_lo, f_hi) = (censored_fraction(lo), censored_fraction(hi));
    // The fraction is non-increasing in delta, so f_lo is the high end.
    if target > f_lo || target < f_hi {
        return Err(Error::Calibration { low: f_hi, high: f_lo, target });
    }
    let mut delta = 0.5 * (lo + hi);
    for _ in 0..CALIBRATION_MAX_ITERS {
        delta = 0.5 * (lo + hi);
        let f = censored_fraction(delta);
        if (f - target).abs() <= 1e-4 {
            break;
        }
        if f > target {
            lo = delta;
        } else {
            hi = delta;
        }
    }
    let achieved = censored_fraction(delta);
    if (achieved - target).abs() > CALIBRATION_TOLERANCE {
        return Err(Error::Calibration { low: achieved.min(target), high: achieved.max(target), target });
    }
    Ok(delta)
}
