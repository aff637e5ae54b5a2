use serde::{Deserialize, Serialize};

use crate::core::Dataset;
use crate::error::{Error, Result};
use crate::nuisance::FitTarget;

/// Per-action product-limit survival curves: `S(t) = prod_{t_j <= t} (1 - d_j / n_j)`.
///
/// Each curve starts at 1, is piecewise constant, right-continuous and
/// non-increasing. Covariates are ignored; this is the covariate-free
/// fallback for the censoring model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KaplanMeierCurve {
    pub n_actions: usize,
    pub target: FitTarget,
    /// Distinct target-event times per action, ascending.
    pub times: Vec<Vec<f64>>,
    /// Survival value immediately after each time.
    pub values: Vec<Vec<f64>>,
}

impl KaplanMeierCurve {
    pub fn survival(&self, action: usize, t: f64) -> Result<f64> {
        let times = self
            .times
            .get(action)
            .ok_or_else(|| Error::Estimate(format!("unknown action index {action}")))?;
        if t <= 0.0 {
            return Ok(1.0);
        }
        let idx = times.partition_point(|&bt| bt <= t);
        Ok(if idx == 0 { 1.0 } else { self.values[action][idx - 1] })
    }
}

/// Fits per-action Kaplan-Meier curves for the chosen target. Records whose
/// indicator is false only leave the risk set (they are the censored ones for
/// this target).
pub fn fit_kaplan_meier(dataset: &Dataset, target: FitTarget) -> Result<KaplanMeierCurve> {
    dataset.require_nonempty("fit_kaplan_meier")?;
    let k = dataset.n_actions();
    let mut times = vec![Vec::new(); k];
    let mut values = vec![Vec::new(); k];
    for action in 0..k {
        let mut rows: Vec<(f64, bool)> = dataset
            .records()
            .iter()
            .filter(|r| r.action == action)
            .map(|r| (r.observed_time, target.indicator(r.event)))
            .collect();
        rows.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("times are finite"));
        let mut at_risk = rows.len() as f64;
        let mut surv = 1.0;
        let mut i = 0;
        while i < rows.len() {
            let t = rows[i].0;
            let mut died = 0.0;
            let mut leaving = 0.0;
            while i < rows.len() && rows[i].0 == t {
                if rows[i].1 {
                    died += 1.0;
                }
                leaving += 1.0;
                i += 1;
            }
            if died > 0.0 {
                surv *= 1.0 - died / at_risk;
                times[action].push(t);
                values[action].push(surv);
            }
            at_risk -= leaving;
        }
    }
    Ok(KaplanMeierCurve { n_actions: k, target, times, values })
}
