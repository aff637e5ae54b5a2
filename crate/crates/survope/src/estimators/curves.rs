use crate::core::TimeGrid;
use crate::nuisance::{CoxModel, KaplanMeierCurve};
use crate::synthenv::{lognormal_survival, true_censoring_survival, true_survival, EnvParams};

/// A survival-curve source: `(context, action, t) -> probability`.
///
/// Fitted models, exact environment curves and deliberately misspecified
/// stand-ins all satisfy this, which is what lets the doubly robust tests
/// swap single nuisances out.
pub trait SurvivalCurve {
    fn survival(&self, context: &[f64], action: usize, t: f64) -> f64;

    /// Appends the curve at `(0, t_1, .., t_m)` to `out`. Implementations
    /// override this to hoist per-`(context, action)` work out of the grid
    /// loop; the values must match the pointwise method.
    fn survival_on_grid(&self, context: &[f64], action: usize, grid: &TimeGrid, out: &mut Vec<f64>) {
        out.push(self.survival(context, action, 0.0));
        for j in 1..=grid.m() {
            out.push(self.survival(context, action, grid.point(j)));
        }
    }
}

impl SurvivalCurve for CoxModel {
    fn survival(&self, context: &[f64], action: usize, t: f64) -> f64 {
        CoxModel::survival(self, context, action, t).expect("action validated by dataset")
    }

    fn survival_on_grid(&self, context: &[f64], action: usize, grid: &TimeGrid, out: &mut Vec<f64>) {
        let stratum = &self.strata[action];
        out.push(1.0);
        if stratum.degenerate {
            out.extend(std::iter::repeat(1.0).take(grid.m()));
            return;
        }
        let eta: f64 = context.iter().zip(&stratum.coefficients).map(|(x, b)| x * b).sum();
        let risk = eta.exp();
        let times = &stratum.baseline_times;
        let mut idx = 0;
        for j in 1..=grid.m() {
            let t = grid.point(j);
            while idx < times.len() && times[idx] <= t {
                idx += 1;
            }
            let h = if idx == 0 { 0.0 } else { stratum.baseline_cumhaz[idx - 1] };
            out.push((-h * risk).exp());
        }
    }
}

impl SurvivalCurve for KaplanMeierCurve {
    fn survival(&self, _context: &[f64], action: usize, t: f64) -> f64 {
        KaplanMeierCurve::survival(self, action, t).expect("action validated by dataset")
    }
}

/// The environment's exact event-survival curve `S(x, a, t)`.
pub struct OracleSurvivalCurve<'a>(pub &'a EnvParams);

impl SurvivalCurve for OracleSurvivalCurve<'_> {
    fn survival(&self, context: &[f64], action: usize, t: f64) -> f64 {
        true_survival(self.0, context, action, t)
    }

    fn survival_on_grid(&self, context: &[f64], action: usize, grid: &TimeGrid, out: &mut Vec<f64>) {
        let mu = self.0.survival_location(context, action);
        out.push(1.0);
        for j in 1..=grid.m() {
            out.push(lognormal_survival(mu, self.0.sigma_l, grid.point(j)));
        }
    }
}

/// The environment's exact censoring-survival curve `G(t | x, a)`.
pub struct OracleCensoringCurve<'a>(pub &'a EnvParams);

impl SurvivalCurve for OracleCensoringCurve<'_> {
    fn survival(&self, context: &[f64], action: usize, t: f64) -> f64 {
        true_censoring_survival(self.0, context, action, t)
    }

    fn survival_on_grid(&self, context: &[f64], action: usize, grid: &TimeGrid, out: &mut Vec<f64>) {
        let scale = self.0.censoring_scale(context, action);
        out.push(1.0);
        for j in 1..=grid.m() {
            out.push((-grid.point(j) / scale).exp());
        }
    }
}

/// A constant curve, e.g. `ConstantCurve(1.0)` for a no-censoring stand-in or
/// `ConstantCurve(0.5)` as a deliberately wrong outcome model.
pub struct ConstantCurve(pub f64);

impl SurvivalCurve for ConstantCurve {
    fn survival(&self, _context: &[f64], _action: usize, _t: f64) -> f64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::rng::stream;
    use crate::core::{Dataset, LoggedRecord};
    use crate::nuisance::{fit_cox, FitTarget};
    use crate::synthenv::{make_env, EnvConfig};
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn grid_overrides_match_pointwise_evaluation() {
        let env = make_env(2, &EnvConfig { d: 3, n_actions: 4, ..EnvConfig::default() }).unwrap();
        let grid = TimeGrid::new(env.tau, 37);

        let mut rng = stream(3, 0);
        let records: Vec<LoggedRecord> = (0..400)
            .map(|i| {
                let x: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let t: f64 = rng.random_range(0.01..3.0);
                LoggedRecord::new(x, i % 4, t, rng.random::<f64>() > 0.4)
            })
            .collect();
        let data = Dataset::new(records, 3, 4).unwrap();
        let cox = fit_cox(&data, FitTarget::Event, 1e-4, 50, 1e-8).unwrap();

        let oracle_s = OracleSurvivalCurve(&env);
        let oracle_g = OracleCensoringCurve(&env);
        let curves: [&dyn SurvivalCurve; 3] = [&cox, &oracle_s, &oracle_g];
        for curve in curves {
            for _ in 0..50 {
                let x: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let a = rng.random_range(0..4);
                let mut batched = Vec::new();
                curve.survival_on_grid(&x, a, &grid, &mut batched);
                assert_eq!(batched.len(), grid.m() + 1);
                assert!((batched[0] - curve.survival(&x, a, 0.0)).abs() < 1e-12);
                for j in 1..=grid.m() {
                    let pointwise = curve.survival(&x, a, grid.point(j));
                    assert!(
                        (batched[j] - pointwise).abs() < 1e-12,
                        "j={j}: batched {} pointwise {pointwise}",
                        batched[j]
                    );
                }
            }
        }
    }
}
