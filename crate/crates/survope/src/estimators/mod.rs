//! Policy-value estimators for censored survival outcomes.
//!
//! Five estimators of the expected survival probability at a time `t` (and,
//! integrated over a grid, of the restricted mean survival time):
//!
//! * `dm`: direct method, plugs the outcome model into the target policy;
//! * `ips` / `dr`: the censoring-ignorant baselines that treat the observed
//!   time as the event time;
//! * `ipcw_ips` / `ipcw_dr`: the censoring-aware estimators that divide each
//!   observed indicator by the censoring survival probability.
//!
//! All estimators are pure functions of `(dataset, policies, nuisances)` and
//! report per-record contributions whose mean is the estimate.

mod curves;

pub use curves::{ConstantCurve, OracleCensoringCurve, OracleSurvivalCurve, SurvivalCurve};

use serde::{Deserialize, Serialize};

use crate::core::{Dataset, Policy, TimeGrid};
use crate::error::{Error, Result};
use crate::synthenv::{sample_contexts, true_censoring_survival, true_survival, EnvParams};

/// Which estimator to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Dm,
    Ips,
    Dr,
    IpcwIps,
    IpcwDr,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::Dm,
        EstimatorKind::Ips,
        EstimatorKind::Dr,
        EstimatorKind::IpcwIps,
        EstimatorKind::IpcwDr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Dm => "dm",
            EstimatorKind::Ips => "ips",
            EstimatorKind::Dr => "dr",
            EstimatorKind::IpcwIps => "ipcw_ips",
            EstimatorKind::IpcwDr => "ipcw_dr",
        }
    }

    fn needs_outcome(self) -> bool {
        matches!(self, EstimatorKind::Dm | EstimatorKind::Dr | EstimatorKind::IpcwDr)
    }

    fn needs_censoring(self) -> bool {
        matches!(self, EstimatorKind::IpcwIps | EstimatorKind::IpcwDr)
    }

    fn needs_propensity(self) -> bool {
        !matches!(self, EstimatorKind::Dm)
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dm" => Ok(EstimatorKind::Dm),
            "ips" => Ok(EstimatorKind::Ips),
            "dr" => Ok(EstimatorKind::Dr),
            "ipcw_ips" => Ok(EstimatorKind::IpcwIps),
            "ipcw_dr" => Ok(EstimatorKind::IpcwDr),
            other => Err(Error::Estimate(format!("unknown estimator {other:?}"))),
        }
    }
}

/// The estimand a report refers to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Target {
    /// Expected survival probability at a fixed time.
    Point(f64),
    /// Restricted mean survival time over `[0, tau]` on an `m`-point grid.
    Rmst { tau: f64, m: usize },
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Target::Point(t) => write!(f, "point(t={t})"),
            Target::Rmst { tau, m } => write!(f, "rmst(tau={tau},m={m})"),
        }
    }
}

/// Nuisance sources behind one evaluation contract. Oracle curves, fitted
/// models and deliberately misspecified stand-ins are interchangeable here.
pub struct NuisanceBundle<'a> {
    pub propensity: &'a dyn Policy,
    pub outcome: Option<&'a dyn SurvivalCurve>,
    pub censoring: Option<&'a dyn SurvivalCurve>,
    /// Floor applied to censoring survival probabilities before inversion;
    /// zero reproduces the literal unclamped estimators.
    pub weight_floor: f64,
}

impl<'a> NuisanceBundle<'a> {
    pub fn new(propensity: &'a dyn Policy) -> Self {
        Self {
            propensity,
            outcome: None,
            censoring: None,
            weight_floor: crate::nuisance::DEFAULT_WEIGHT_FLOOR,
        }
    }

    pub fn with_outcome(mut self, outcome: &'a dyn SurvivalCurve) -> Self {
        self.outcome = Some(outcome);
        self
    }

    pub fn with_censoring(mut self, censoring: &'a dyn SurvivalCurve) -> Self {
        self.censoring = Some(censoring);
        self
    }

    pub fn with_weight_floor(mut self, floor: f64) -> Self {
        self.weight_floor = floor;
        self
    }
}

/// One estimator evaluation: the value, its per-record contributions and how
/// often the censoring-probability floor fired.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: EstimatorKind,
    pub target: Target,
    pub value: f64,
    pub per_sample: Vec<f64>,
    pub clamp_count: usize,
}

impl EstimateReport {
    /// `estimator,target,value,clamp_count`
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.estimator, self.target, self.value, self.clamp_count)
    }
}

/// Across-trial error decomposition against a fixed truth, with the
/// population-variance convention so `mse = squared_bias + variance` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub mse: f64,
    pub squared_bias: f64,
    pub variance: f64,
    pub n_trials: usize,
}

/// Aggregates per-trial estimates against the cached truth.
pub fn aggregate_trials(estimates: &[f64], truth: f64) -> Result<TrialMetrics> {
    if estimates.len() < 2 {
        return Err(Error::Estimate(format!(
            "need at least 2 estimates to aggregate, got {}",
            estimates.len()
        )));
    }
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let squared_bias = (mean - truth) * (mean - truth);
    let variance = estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    let mse = estimates.iter().map(|e| (e - truth) * (e - truth)).sum::<f64>() / n;
    Ok(TrialMetrics { mse, squared_bias, variance, n_trials: estimates.len() })
}

/// Per-record inputs shared by every estimator and every grid point.
struct RecordContext {
    eval_probs: Vec<f64>,
    /// Importance weight `pi_e(a_i|x_i) / pi_0(a_i|x_i)`; zero when the target
    /// policy never takes the logged action.
    weight: f64,
}

fn record_contexts(
    dataset: &Dataset,
    eval_policy: &dyn Policy,
    nuisance: &NuisanceBundle,
    needs_weight: bool,
) -> Result<Vec<RecordContext>> {
    let mut out = Vec::with_capacity(dataset.len());
    for r in dataset.records() {
        let eval_probs = eval_policy.probs(&r.context);
        let weight = if needs_weight {
            let target_prob = eval_probs[r.action];
            if target_prob == 0.0 {
                0.0
            } else {
                let logged_prob = nuisance.propensity.prob(&r.context, r.action);
                if logged_prob <= 0.0 {
                    return Err(Error::CommonSupport { action: r.action, target_prob });
                }
                target_prob / logged_prob
            }
        } else {
            0.0
        };
        out.push(RecordContext { eval_probs, weight });
    }
    Ok(out)
}

/// The contribution of one record at one time, by estimator.
#[allow(clippy::too_many_arguments)]
fn contribution(
    kind: EstimatorKind,
    ctx: &RecordContext,
    record: &crate::core::LoggedRecord,
    nuisance: &NuisanceBundle,
    t: f64,
    clamp_count: &mut usize,
) -> f64 {
    let indicator = f64::from(record.observed_time > t);
    let dm_term = |outcome: &dyn SurvivalCurve| -> f64 {
        ctx.eval_probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(a, &p)| p * outcome.survival(&record.context, a, t))
            .sum()
    };
    // Zero indicators contribute zero without touching G, so a censoring
    // probability that underflows to 0 for an already-censored record cannot
    // produce 0/0.
    let mut censoring_weighted = |censoring: &dyn SurvivalCurve| -> f64 {
        if indicator == 0.0 {
            return 0.0;
        }
        let g = censoring.survival(&record.context, record.action, t);
        let clamped = g.max(nuisance.weight_floor);
        if clamped > g {
            *clamp_count += 1;
        }
        indicator / clamped
    };
    match kind {
        EstimatorKind::Dm => dm_term(nuisance.outcome.expect("outcome checked")),
        EstimatorKind::Ips => ctx.weight * indicator,
        EstimatorKind::Dr => {
            let outcome = nuisance.outcome.expect("outcome checked");
            let fitted = outcome.survival(&record.context, record.action, t);
            ctx.weight * (indicator - fitted) + dm_term(outcome)
        }
        EstimatorKind::IpcwIps => {
            ctx.weight * censoring_weighted(nuisance.censoring.expect("censoring checked"))
        }
        EstimatorKind::IpcwDr => {
            let outcome = nuisance.outcome.expect("outcome checked");
            let fitted = outcome.survival(&record.context, record.action, t);
            let adjusted = censoring_weighted(nuisance.censoring.expect("censoring checked"));
            ctx.weight * (adjusted - fitted) + dm_term(outcome)
        }
    }
}

fn check_sources(kind: EstimatorKind, nuisance: &NuisanceBundle) -> Result<()> {
    if kind.needs_outcome() && nuisance.outcome.is_none() {
        return Err(Error::MissingNuisance("outcome survival model"));
    }
    if kind.needs_censoring() && nuisance.censoring.is_none() {
        return Err(Error::MissingNuisance("censoring survival model"));
    }
    Ok(())
}

/// Expected survival probability at `t` under `eval_policy`.
pub fn estimate_at(
    kind: EstimatorKind,
    dataset: &Dataset,
    eval_policy: &dyn Policy,
    nuisance: &NuisanceBundle,
    t: f64,
) -> Result<EstimateReport> {
    dataset.require_nonempty("estimate_at")?;
    check_sources(kind, nuisance)?;
    let ctxs = record_contexts(dataset, eval_policy, nuisance, kind.needs_propensity())?;
    let mut clamp_count = 0;
    let per_sample: Vec<f64> = dataset
        .records()
        .iter()
        .zip(&ctxs)
        .map(|(r, ctx)| contribution(kind, ctx, r, nuisance, t, &mut clamp_count))
        .collect();
    let value = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    Ok(EstimateReport { estimator: kind, target: Target::Point(t), value, per_sample, clamp_count })
}

/// Restricted mean survival time: the chosen point estimator evaluated on
/// `{0, t_1, .., t_m}` and trapezoid-integrated. The origin uses the
/// estimator at `t -> 0+`, where every observed indicator is one.
///
/// Contributions integrate per record, so the report's `per_sample` are
/// per-record RMST contributions and their mean is the value.
pub fn estimate_rmst(
    kind: EstimatorKind,
    dataset: &Dataset,
    eval_policy: &dyn Policy,
    nuisance: &NuisanceBundle,
    grid: &TimeGrid,
) -> Result<EstimateReport> {
    dataset.require_nonempty("estimate_rmst")?;
    check_sources(kind, nuisance)?;
    let ctxs = record_contexts(dataset, eval_policy, nuisance, kind.needs_propensity())?;
    let k = dataset.n_actions();
    let m = grid.m();
    let mut clamp_count = 0;

    // Per-record curve values are hoisted out of the grid loop.
    let mut g_grid: Vec<f64> = Vec::with_capacity(m + 1);
    let mut s_grids: Vec<Vec<f64>> = vec![Vec::with_capacity(m + 1); k];
    let mut values = Vec::with_capacity(m + 1);

    let per_sample: Vec<f64> = dataset
        .records()
        .iter()
        .zip(&ctxs)
        .map(|(r, ctx)| {
            if kind.needs_censoring() {
                let censoring = nuisance.censoring.expect("censoring checked");
                g_grid.clear();
                censoring.survival_on_grid(&r.context, r.action, grid, &mut g_grid);
            }
            if kind.needs_outcome() {
                let outcome = nuisance.outcome.expect("outcome checked");
                for (a, s_grid) in s_grids.iter_mut().enumerate() {
                    s_grid.clear();
                    outcome.survival_on_grid(&r.context, a, grid, s_grid);
                }
            }
            values.clear();
            for j in 0..=m {
                let t = if j == 0 { 0.0 } else { grid.point(j) };
                let indicator = f64::from(r.observed_time > t);
                let adjusted = if kind.needs_censoring() {
                    if indicator == 0.0 {
                        0.0
                    } else {
                        let g = g_grid[j];
                        let clamped = g.max(nuisance.weight_floor);
                        if clamped > g {
                            clamp_count += 1;
                        }
                        indicator / clamped
                    }
                } else {
                    indicator
                };
                let dm_term = || -> f64 {
                    ctx.eval_probs
                        .iter()
                        .zip(&s_grids)
                        .filter(|(&p, _)| p > 0.0)
                        .map(|(&p, s_grid)| p * s_grid[j])
                        .sum()
                };
                let contrib = match kind {
                    EstimatorKind::Dm => dm_term(),
                    EstimatorKind::Ips | EstimatorKind::IpcwIps => ctx.weight * adjusted,
                    EstimatorKind::Dr | EstimatorKind::IpcwDr => {
                        ctx.weight * (adjusted - s_grids[r.action][j]) + dm_term()
                    }
                };
                values.push(contrib);
            }
            grid.trapezoid(&values)
        })
        .collect();
    let value = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    Ok(EstimateReport {
        estimator: kind,
        target: Target::Rmst { tau: grid.tau(), m: grid.m() },
        value,
        per_sample,
        clamp_count,
    })
}

/// Monte Carlo evaluation of the naive estimators' censoring bias
/// `E[ S(x,a,t) (G(t|x,a) - 1) ]` under the evaluation policy, using the
/// environment's exact curves. Always non-positive, and more negative under
/// heavier censoring.
pub fn naive_bias_oracle(
    env: &EnvParams,
    eval_policy: &dyn Policy,
    t: f64,
    n_mc: usize,
    seed: u64,
) -> f64 {
    let contexts = sample_contexts(env.d, n_mc, seed);
    let mut total = 0.0;
    for x in &contexts {
        let probs = eval_policy.probs(x);
        for (a, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                let s = true_survival(env, x, a, t);
                let g = true_censoring_survival(env, x, a, t);
                total += p * s * (g - 1.0);
            }
        }
    }
    total / n_mc as f64
}

/// As [`naive_bias_oracle`] for the RMST target: the bias formula integrated
/// over the grid.
pub fn naive_bias_oracle_rmst(
    env: &EnvParams,
    eval_policy: &dyn Policy,
    grid: &TimeGrid,
    n_mc: usize,
    seed: u64,
) -> f64 {
    let contexts = sample_contexts(env.d, n_mc, seed);
    let mut total = 0.0;
    let mut values = Vec::with_capacity(grid.m() + 1);
    for x in &contexts {
        let probs = eval_policy.probs(x);
        values.clear();
        values.push(0.0); // G(0) = 1 makes the integrand vanish at the origin.
        for j in 1..=grid.m() {
            let t = grid.point(j);
            let mut v = 0.0;
            for (a, &p) in probs.iter().enumerate() {
                if p > 0.0 {
                    v += p
                        * true_survival(env, x, a, t)
                        * (true_censoring_survival(env, x, a, t) - 1.0);
                }
            }
            values.push(v);
        }
        total += grid.trapezoid(&values);
    }
    total / n_mc as f64
}

/// Across-trial standard error of the mean.
pub fn standard_error(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}
