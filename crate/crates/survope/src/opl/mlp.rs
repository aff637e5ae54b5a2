use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::core::{softmax, DifferentiablePolicy, Policy};

/// A small feed-forward policy: rectified-linear hidden layers and a softmax
/// head over the action space.
///
/// Weights are stored per layer, row-major `(fan_out, fan_in)`; parameters
/// flatten layer by layer, weights then biases, for the optimizer and the
/// finite-difference checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpPolicy {
    pub layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Cached activations of one forward pass.
pub struct ForwardPass {
    /// Post-activation values per layer, starting with the input itself.
    activations: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

impl MlpPolicy {
    /// Xavier-uniform initialization (biases zero): every weight is drawn
    /// `U(-limit, limit)` with `limit = sqrt(6 / (fan_in + fan_out))`.
    pub fn new<R: Rng>(d: usize, n_actions: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut layer_sizes = vec![d];
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(n_actions);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_sizes.len() - 1 {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push((0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect());
            biases.push(vec![0.0; fan_out]);
        }
        Self { layer_sizes, weights, biases }
    }

    pub fn d(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn forward(&self, context: &[f64]) -> ForwardPass {
        assert_eq!(context.len(), self.d(), "context dimension mismatch");
        let mut activations = Vec::with_capacity(self.n_layers() + 1);
        activations.push(context.to_vec());
        let mut logits = Vec::new();
        for l in 0..self.n_layers() {
            let input = &activations[l];
            let fan_in = self.layer_sizes[l];
            let mut out = self.biases[l].clone();
            for (i, o) in out.iter_mut().enumerate() {
                let row = &self.weights[l][i * fan_in..(i + 1) * fan_in];
                *o += row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
            }
            if l + 1 < self.n_layers() {
                for v in &mut out {
                    *v = v.max(0.0);
                }
                activations.push(out);
            } else {
                logits = out;
            }
        }
        // Hidden layers store post-ReLU values, whose zeros double as the
        // ReLU mask during the backward pass.
        let probs = softmax(&logits);
        ForwardPass { activations, probs }
    }

    /// Accumulates the parameter gradient of a scalar whose logit gradient is
    /// `dlogits`, scaled by `scale`, into `grad` (flattened layout).
    pub fn backward_logits(
        &self,
        fwd: &ForwardPass,
        dlogits: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) {
        debug_assert_eq!(grad.len(), self.n_params());
        let mut upstream: Vec<f64> = dlogits.to_vec();
        let mut offset = self.n_params();
        for l in (0..self.n_layers()).rev() {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let input = &fwd.activations[l];
            offset -= fan_in * fan_out + fan_out;
            let (w_grad, b_grad) = grad[offset..offset + fan_in * fan_out + fan_out]
                .split_at_mut(fan_in * fan_out);
            for i in 0..fan_out {
                let di = upstream[i] * scale;
                if di != 0.0 {
                    let row = &mut w_grad[i * fan_in..(i + 1) * fan_in];
                    for (g, x) in row.iter_mut().zip(input) {
                        *g += di * x;
                    }
                    b_grad[i] += di;
                }
            }
            if l > 0 {
                let mut down = vec![0.0; fan_in];
                for i in 0..fan_out {
                    let u = upstream[i];
                    if u != 0.0 {
                        let row = &self.weights[l][i * fan_in..(i + 1) * fan_in];
                        for (dj, w) in down.iter_mut().zip(row) {
                            *dj += u * w;
                        }
                    }
                }
                // ReLU mask: hidden activations are zero exactly where the
                // unit was clipped.
                for (dj, &a) in down.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *dj = 0.0;
                    }
                }
                upstream = down;
            }
        }
        debug_assert_eq!(offset, 0);
    }

    pub fn params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        for l in 0..self.n_layers() {
            flat.extend_from_slice(&self.weights[l]);
            flat.extend_from_slice(&self.biases[l]);
        }
        flat
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        let mut offset = 0;
        for l in 0..self.n_layers() {
            let nw = self.weights[l].len();
            self.weights[l].copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = self.biases[l].len();
            self.biases[l].copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
    }
}

impl Policy for MlpPolicy {
    fn n_actions(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    fn probs(&self, context: &[f64]) -> Vec<f64> {
        self.forward(context).probs
    }
}

impl DifferentiablePolicy for MlpPolicy {
    fn n_params(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// `d log pi(action | context) / d theta` via one backward pass with the
    /// softmax log-likelihood seed `e_action - probs`.
    fn log_prob_gradient(&self, context: &[f64], action: usize) -> Vec<f64> {
        let fwd = self.forward(context);
        let mut dlogits: Vec<f64> = fwd.probs.iter().map(|p| -p).collect();
        dlogits[action] += 1.0;
        let mut grad = vec![0.0; self.n_params()];
        self.backward_logits(&fwd, &dlogits, 1.0, &mut grad);
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::rng::stream;
    use rand_distr::StandardNormal;

    fn policy(seed: u64) -> MlpPolicy {
        let mut rng = stream(seed, 0);
        MlpPolicy::new(4, 3, &[8, 8], &mut rng)
    }

    #[test]
    fn probs_are_a_distribution() {
        let p = policy(1);
        let mut rng = stream(9, 0);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let probs = p.probs(&x);
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(probs.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn params_round_trip() {
        let mut p = policy(2);
        let flat = p.params();
        assert_eq!(flat.len(), p.n_params());
        let mut q = policy(3);
        q.set_params(&flat);
        assert_eq!(q.params(), flat);
        p.set_params(&flat);
        assert_eq!(p.params(), flat);
    }

    #[test]
    fn biases_start_at_zero() {
        let p = policy(4);
        for b in &p.biases {
            assert!(b.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn log_prob_gradient_matches_finite_differences() {
        let p = policy(5);
        let mut rng = stream(11, 0);
        let n_params = p.n_params();
        for trial in 0..5 {
            let x: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let a = trial % 3;
            let analytic = p.log_prob_gradient(&x, a);
            // 20 random components per (x, a).
            for _ in 0..20 {
                let idx = rng.random_range(0..n_params);
                let h = 1e-5;
                let mut plus = p.clone();
                let mut flat = p.params();
                flat[idx] += h;
                plus.set_params(&flat);
                let mut minus = p.clone();
                flat[idx] -= 2.0 * h;
                minus.set_params(&flat);
                let fd = (plus.probs(&x)[a].ln() - minus.probs(&x)[a].ln()) / (2.0 * h);
                let denom = fd.abs().max(1e-8);
                assert!(
                    (analytic[idx] - fd).abs() / denom < 1e-4,
                    "component {idx}: analytic {} fd {fd}",
                    analytic[idx]
                );
            }
        }
    }

    #[test]
    fn score_function_identity() {
        // sum_a pi(a|x) d log pi(a|x) = 0.
        let p = policy(6);
        let mut rng = stream(13, 0);
        for _ in 0..10 {
            let x: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let probs = p.probs(&x);
            let mut total = vec![0.0; p.n_params()];
            for (a, &pa) in probs.iter().enumerate() {
                for (t, g) in total.iter_mut().zip(p.log_prob_gradient(&x, a)) {
                    *t += pa * g;
                }
            }
            let max = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(max < 1e-8, "score identity violated: {max}");
        }
    }
}
