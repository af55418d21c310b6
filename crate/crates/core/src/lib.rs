//! Simulation and inference for augmented randomized trials.
//!
//! A core RCT (Part A: eligible patients under RCT conditions) runs alongside
//! a randomized Part B that treats eligible patients under close-to-real-world
//! (cRW) conditions and broader-population patients under either condition
//! set. The crate randomizes such trials, generates outcomes from a cell-mean
//! model, computes true estimand values, estimates all nine estimands by
//! saturated least squares and summarizes Monte Carlo operating
//! characteristics, optionally gating Part B on an interim Bayesian rule.

// `!(x > y)` is used on purpose to reject NaN; index loops mirror the algebra.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cell;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod design;
pub mod error;
pub mod estimand;
pub mod gate;
pub mod inference;
mod linalg;
pub mod montecarlo;
pub mod outcome;
pub mod report;
pub mod rng;

pub use cell::{Cell, Conditions, Eligibility, Treatment};
pub use config::ScenarioConfig;
pub use design::{ablate_to_plain_rct, randomize_cohort, validate_design, DesignSpec, Part, PatientRecord, TrialDataset};
pub use error::{Error, Result};
pub use estimand::{build_contrast, verify_identities, EstimandName, EstimandSet, WeightScheme, Weights};
pub use gate::{apply_gate, GatingRule};
pub use inference::{
    build_design_matrix, estimate_dataset, estimate_estimands, estimate_from_csv, fit_saturated, AnalysisConfig,
    EstimateReport, VarianceModel,
};
pub use montecarlo::{run_replicates, Scenario, SimulationSummary};
pub use outcome::{generate_outcomes, true_estimands, OutcomeModelSpec, TrueEstimands};
