//! Shared domain types: logged records, datasets, policies, time grids,
//! deterministic random streams and the dataset CSV format.

mod csv;
mod grid;
mod policy;
mod record;
pub mod rng;

pub use csv::{load_dataset_csv, save_dataset_csv};
pub use grid::TimeGrid;
pub use policy::{sample_action, softmax, DifferentiablePolicy, Policy, SoftmaxLinearPolicy, UniformPolicy};
pub use record::{Dataset, LoggedRecord};
