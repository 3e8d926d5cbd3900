//! Simulation laboratory for counterfactual-prediction estimates of the
//! average treatment effect.
//!
//! The pipeline, per replicate: draw covariates and a treatment assignment
//! (randomized or confounded through `x3`), generate outcomes with a known
//! constant effect, split by treatment, fit one model per group, predict
//! each group's counterfactuals with the other group's model, and mix the
//! two contrasts by the treated fraction. [`harness::run_grid`] repeats this
//! over a grid of effect sizes and participation rates and
//! [`report`] writes the resulting tables.

pub mod config;
pub mod datagen;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod matrix;
pub mod models;
pub mod report;
pub mod rng;
pub mod stats;

pub use config::{parse_config, parse_config_file, Confounding, ExperimentConfig, Scenario, ScenarioConfig};
pub use datagen::Dataset;
pub use error::{Error, Result};
pub use estimator::{estimate_all, estimate_ate, naive_ate, pct_error, split_by_treatment, AteEstimates, Estimator};
pub use harness::{run_cell, run_grid, summarize_excluding, CellResult, GridReport};
pub use matrix::DesignMatrix;
pub use models::{Method, ModelConfig, Predictor, Regressor};
pub use rng::{derive_stream, RngStream};
