//! Employee turnover analytics: ingestion and curation of HR populations,
//! mutual-information feature filtering, class-imbalance correction,
//! classical classifiers, cross-validated model selection, and
//! counterfactual simulation of retention programs.

pub mod balance;
pub mod dataset;
pub mod eval;
pub mod features;
pub mod models;
pub mod policy;
pub mod seeding;
pub mod synthgen;

pub use balance::{rebalance, ResamplingMethod, WeightedDataset};
pub use dataset::{
    curate_scope, load_dataset, split_stratified, Dataset, EmployeeRecord, FeatureKind,
    FeatureSpec, Label, Schema, Strata, Value,
};
pub use models::{fit, Family, Hyperparameters, TrainedModel};
