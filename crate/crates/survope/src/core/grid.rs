use serde::{Deserialize, Serialize};

/// `m` equally spaced evaluation times on `(0, tau]`, with spacing `tau / m`.
///
/// Integration routines prepend the origin `t = 0` themselves, so the stored
/// points are `t_1 .. t_m` with `t_m == tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    tau: f64,
    m: usize,
}

impl TimeGrid {
    pub fn new(tau: f64, m: usize) -> Self {
        assert!(tau > 0.0 && tau.is_finite(), "horizon must be positive");
        assert!(m >= 1, "grid needs at least one point");
        Self { tau, m }
    }

    /// The default grid used throughout: 100 points on (0, tau].
    pub fn with_default_resolution(tau: f64) -> Self {
        Self::new(tau, 100)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn spacing(&self) -> f64 {
        self.tau / self.m as f64
    }

    /// Grid point `t_j` for `j` in `1..=m`; `t_m` is exactly `tau`.
    pub fn point(&self, j: usize) -> f64 {
        debug_assert!(j >= 1 && j <= self.m);
        if j == self.m {
            self.tau
        } else {
            self.tau * j as f64 / self.m as f64
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (1..=self.m).map(|j| self.point(j)).collect()
    }

    /// Trapezoidal integral over `[0, tau]` of the step values
    /// `(f(0), f(t_1), .., f(t_m))`; `values` has length `m + 1`.
    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.m + 1, "need f(0) plus one value per grid point");
        let dt = self.spacing();
        let interior: f64 = values[1..self.m].iter().sum();
        dt * (0.5 * values[0] + interior + 0.5 * values[self.m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_are_increasing_and_end_at_tau() {
        let g = TimeGrid::new(2.0, 100);
        let pts = g.points();
        assert_eq!(pts.len(), 100);
        for w in pts.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert_eq!(*pts.last().unwrap(), 2.0);
    }

    #[test]
    fn trapezoid_of_constant_is_c_tau() {
        let g = TimeGrid::new(2.0, 100);
        let vals = vec![0.7; 101];
        assert!((g.trapezoid(&vals) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_of_linear_is_exact() {
        let g = TimeGrid::new(1.0, 10);
        // f(t) = t integrates to 0.5 exactly under the trapezoid rule.
        let mut vals = vec![0.0];
        vals.extend(g.points());
        assert!((g.trapezoid(&vals) - 0.5).abs() < 1e-12);
    }
}
