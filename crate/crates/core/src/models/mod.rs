//! Outcome regressors behind a common fit/predict contract.

pub mod forest;
pub mod lasso;
pub mod ols;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{check_row, DesignMatrix};
use crate::rng::RngStream;

pub use forest::{fit_forest, predict_forest, ForestConfig, ForestFit, RegressionTree};
pub use lasso::{
    coordinate_descent, fit_lasso, fit_lasso_cv, fit_lasso_cv_with_grid, lasso_objective, standardize, CdResult,
    LambdaGrid, LassoConfig, LassoFit, Standardization,
};
pub use ols::{fit_ols, predict_linear, LinearFit};

/// Anything that maps a covariate row to a scalar prediction.
pub trait Predictor {
    fn predict(&self, row: &[f64]) -> Result<f64>;
}

impl Predictor for LinearFit {
    fn predict(&self, row: &[f64]) -> Result<f64> {
        LinearFit::predict(self, row)
    }
}

impl Predictor for LassoFit {
    fn predict(&self, row: &[f64]) -> Result<f64> {
        LassoFit::predict(self, row)
    }
}

impl Predictor for ForestFit {
    fn predict(&self, row: &[f64]) -> Result<f64> {
        ForestFit::predict(self, row)
    }
}

/// The three model families compared in the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "LM", alias = "lm")]
    Lm,
    #[serde(rename = "Lasso", alias = "lasso")]
    Lasso,
    #[serde(rename = "RF", alias = "rf")]
    Rf,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Lm, Method::Lasso, Method::Rf];

    pub fn label(self) -> &'static str {
        match self {
            Method::Lm => "LM",
            Method::Lasso => "Lasso",
            Method::Rf => "RF",
        }
    }

    /// Offset of this method's model-internal stream above the base model tag.
    pub fn stream_offset(self) -> u64 {
        match self {
            Method::Lm => 0,
            Method::Lasso => 1,
            Method::Rf => 2,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lm" | "ols" => Ok(Method::Lm),
            "lasso" => Ok(Method::Lasso),
            "rf" | "forest" => Ok(Method::Rf),
            other => Err(Error::config("methods", format!("unknown method `{other}`"))),
        }
    }
}

/// Hyperparameters for every family.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub lasso: LassoConfig,
    pub forest: ForestConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.lasso.validate()?;
        self.forest.validate()
    }
}

/// A fitted model of any family.
#[derive(Debug, Clone, PartialEq)]
pub enum Regressor {
    Linear(LinearFit),
    Lasso(LassoFit),
    Forest(ForestFit),
}

impl Regressor {
    pub fn n_features(&self) -> usize {
        match self {
            Regressor::Linear(f) => f.coefficients.len(),
            Regressor::Lasso(f) => f.coefficients.len(),
            Regressor::Forest(f) => f.n_features,
        }
    }
}

impl Predictor for Regressor {
    fn predict(&self, row: &[f64]) -> Result<f64> {
        check_row(row, self.n_features())?;
        Ok(match self {
            Regressor::Linear(f) => f.predict_unchecked(row),
            Regressor::Lasso(f) => f.predict_unchecked(row),
            Regressor::Forest(f) => f.predict_unchecked(row),
        })
    }
}

/// Fit one family. OLS ignores the stream.
pub fn fit_method(
    method: Method,
    x: &DesignMatrix,
    y: &[f64],
    cfg: &ModelConfig,
    stream: &mut RngStream,
) -> Result<Regressor> {
    Ok(match method {
        Method::Lm => Regressor::Linear(fit_ols(x, y)?),
        Method::Lasso => Regressor::Lasso(fit_lasso_cv(x, y, &cfg.lasso, stream)?),
        Method::Rf => Regressor::Forest(fit_forest(x, y, &cfg.forest, stream)?),
    })
}
