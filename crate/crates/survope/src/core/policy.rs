use rand::Rng;
use serde::{Deserialize, Serialize};

/// A conditional action distribution over a discrete action space.
///
/// `probs` must return a valid distribution: entries nonnegative, summing to
/// one within 1e-9.
pub trait Policy {
    fn n_actions(&self) -> usize;

    /// Action probabilities for one context, length `n_actions`.
    fn probs(&self, context: &[f64]) -> Vec<f64>;

    /// Probability of a single action; override when cheaper than `probs`.
    fn prob(&self, context: &[f64], action: usize) -> f64 {
        self.probs(context)[action]
    }
}

/// A policy with differentiable log-probabilities, used by gradient learners.
pub trait DifferentiablePolicy: Policy {
    fn n_params(&self) -> usize;

    /// Gradient of `log pi(action | context)` with respect to the policy's own
    /// parameters, flattened to length `n_params`.
    fn log_prob_gradient(&self, context: &[f64], action: usize) -> Vec<f64>;
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Draws an action index from `probs` using a single uniform variate.
///
/// Cumulative-scan inversion keeps the draw count fixed at one per action so
/// generated streams stay reproducible across library versions.
pub fn sample_action<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (a, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return a;
        }
    }
    probs.len() - 1
}

/// The uniform policy 1/K.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UniformPolicy {
    pub n_actions: usize,
}

impl Policy for UniformPolicy {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn probs(&self, _context: &[f64]) -> Vec<f64> {
        vec![1.0 / self.n_actions as f64; self.n_actions]
    }

    fn prob(&self, _context: &[f64], _action: usize) -> f64 {
        1.0 / self.n_actions as f64
    }
}

/// Softmax over linear scores: `pi(a | x) = softmax(beta * x^T W)_a`.
///
/// `weights` is stored row-major with shape `(d, n_actions)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SoftmaxLinearPolicy {
    pub d: usize,
    pub n_actions: usize,
    pub beta: f64,
    pub weights: Vec<f64>,
}

impl SoftmaxLinearPolicy {
    pub fn new(d: usize, n_actions: usize, beta: f64, weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), d * n_actions, "weights must be d x n_actions");
        Self { d, n_actions, beta, weights }
    }

    fn scores(&self, context: &[f64]) -> Vec<f64> {
        assert_eq!(context.len(), self.d, "context dimension mismatch");
        let mut scores = vec![0.0; self.n_actions];
        for (j, &xj) in context.iter().enumerate() {
            let row = &self.weights[j * self.n_actions..(j + 1) * self.n_actions];
            for (a, &w) in row.iter().enumerate() {
                scores[a] += xj * w;
            }
        }
        for s in &mut scores {
            *s *= self.beta;
        }
        scores
    }
}

impl Policy for SoftmaxLinearPolicy {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn probs(&self, context: &[f64]) -> Vec<f64> {
        softmax(&self.scores(context))
    }
}
