use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One logged observation: context, the action the logging policy took, the
/// observed (possibly censored) time, the event indicator and an optional cost.
///
/// `event == true` means the latent event time was observed (`L <= C`);
/// `event == false` means the record was censored at `observed_time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedRecord {
    pub context: Vec<f64>,
    pub action: usize,
    pub observed_time: f64,
    pub event: bool,
    /// Present only when the log carries per-decision costs (constrained OPL).
    pub cost: Option<f64>,
}

impl LoggedRecord {
    pub fn new(context: Vec<f64>, action: usize, observed_time: f64, event: bool) -> Self {
        Self { context, action, observed_time, event, cost: None }
    }

    pub fn with_cost(mut self, cost: f64) -> Self {
        self.cost = Some(cost);
        self
    }
}

/// An ordered collection of [`LoggedRecord`]s sharing one context dimension `d`
/// and one action-space size `n_actions`. Record order is stable so seeded
/// generation reproduces byte-for-byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<LoggedRecord>,
    d: usize,
    n_actions: usize,
}

impl Dataset {
    /// Validates every record against the declared dimensions.
    pub fn new(records: Vec<LoggedRecord>, d: usize, n_actions: usize) -> Result<Self> {
        for (i, rec) in records.iter().enumerate() {
            if rec.context.len() != d {
                return Err(Error::Dimension(format!(
                    "record {i} has context dimension {} but dataset declares d={d}",
                    rec.context.len()
                )));
            }
            if rec.action >= n_actions {
                return Err(Error::InvalidRecord(format!(
                    "record {i} has action {} outside [0, {n_actions})",
                    rec.action
                )));
            }
            if !(rec.observed_time > 0.0) || !rec.observed_time.is_finite() {
                return Err(Error::InvalidRecord(format!(
                    "record {i} has non-positive observed_time {}",
                    rec.observed_time
                )));
            }
            if let Some(c) = rec.cost {
                if !(c >= 0.0) || !c.is_finite() {
                    return Err(Error::InvalidRecord(format!("record {i} has invalid cost {c}")));
                }
            }
        }
        Ok(Self { records, d, n_actions })
    }

    pub fn records(&self) -> &[LoggedRecord] {
        &self.records
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// True when every record carries a cost.
    pub fn has_costs(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.cost.is_some())
    }

    /// Errors unless the dataset is usable for fitting or estimation.
    pub fn require_nonempty(&self, caller: &str) -> Result<()> {
        if self.records.is_empty() {
            Err(Error::EmptyDataset(caller.to_string()))
        } else {
            Ok(())
        }
    }

    /// New dataset holding the records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            d: self.d,
            n_actions: self.n_actions,
        }
    }
}
