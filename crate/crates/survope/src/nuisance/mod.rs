//! Nuisance-model estimation from logged data: the propensity of the logging
//! policy, the outcome survival curve and the censoring survival curve.

mod cox;
mod km;
mod propensity;

pub use cox::{fit_cox, CoxModel, CoxStratum, DEFAULT_COX_RIDGE};
pub use km::{fit_kaplan_meier, KaplanMeierCurve};
pub use propensity::{fit_propensity, PropensityModel};

use serde::{Deserialize, Serialize};

/// Which latent time a survival fit targets. `Censoring` flips the event
/// indicator so censored records become the events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitTarget {
    Event,
    Censoring,
}

impl FitTarget {
    pub(crate) fn indicator(self, event: bool) -> bool {
        match self {
            FitTarget::Event => event,
            FitTarget::Censoring => !event,
        }
    }
}

/// Floors a censoring survival probability away from zero so the inverse
/// weight stays bounded. A floor of zero reproduces the unclamped estimator.
pub fn clamp_censoring_weight(g: f64, floor: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&g), "probability out of range: {g}");
    g.max(floor)
}

/// Default floor for censoring survival probabilities.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 0.02;

/// The three fitted nuisances for one dataset, serializable as one JSON
/// document for reuse across runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedNuisances {
    pub propensity: PropensityModel,
    pub outcome: CoxModel,
    pub censoring: CoxModel,
}
