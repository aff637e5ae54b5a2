use thiserror::Error;

/// Errors surfaced by dataset handling, model fitting, estimation and training.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed dataset file {path}, line {line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("censoring-rate calibration failed: achieved range [{low:.4}, {high:.4}] does not cover target {target:.4}")]
    Calibration { low: f64, high: f64, target: f64 },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("common support violated: logging propensity is zero for action {action} while the target policy assigns probability {target_prob:.3e}")]
    CommonSupport { action: usize, target_prob: f64 },

    #[error("missing nuisance component: {0}")]
    MissingNuisance(&'static str),

    #[error("estimation error: {0}")]
    Estimate(String),

    #[error("training diverged at epoch {epoch}: {msg}")]
    Diverged { epoch: usize, msg: String },

    #[error("serialization error: {0}")]
    Serialize(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
