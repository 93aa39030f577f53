//! Covariate adjustment for two-arm randomized trials: balancing weights
//! (overlap, inverse probability and friends), ANCOVA, augmented IPW,
//! sandwich variances and a Monte Carlo harness.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod propensity;
pub mod report;
pub mod simulation;
pub mod variance;
pub mod weighting;

pub use dataset::{load_csv, ColumnSchema, OutcomeKind, TrialDataset};
pub use error::{Error, Result};
pub use estimators::{Analysis, EffectEstimate, EstimandKind, Method};
pub use propensity::{fit_logistic, fit_propensity, LogisticOptions, PropensityFit};
pub use simulation::{run_monte_carlo, Dgp, MonteCarloOptions, Scenario, SimulationSummary};
pub use weighting::WeightingScheme;
