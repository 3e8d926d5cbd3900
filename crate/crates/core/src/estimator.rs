//! Counterfactual-prediction estimate of the average treatment effect.
//!
//! One model is trained per treatment group. Each group's covariates are
//! fed to the *other* group's model to predict its counterfactual outcomes,
//! and the two group-level contrasts are mixed by the treated fraction:
//!
//! `ATE = π·(ȳ_t − mean M_c(X_t)) + (1 − π)·(mean M_t(X_c) − ȳ_c)`

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::matrix::{mean, DesignMatrix};
use crate::models::{fit_method, Method, ModelConfig, Predictor};
use crate::rng::{purpose, ReplicateKey, RngStream};

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSplit {
    pub x_treated: DesignMatrix,
    pub y_treated: Vec<f64>,
    pub x_control: DesignMatrix,
    pub y_control: Vec<f64>,
    /// `n_t / (n_t + n_c)`.
    pub pi_empirical: f64,
}

impl GroupSplit {
    pub fn n_treated(&self) -> usize {
        self.y_treated.len()
    }

    pub fn n_control(&self) -> usize {
        self.y_control.len()
    }
}

/// Partition rows by treatment, keeping their original order within groups.
pub fn split_by_treatment(d: &Dataset) -> Result<GroupSplit> {
    let (treated, control): (Vec<usize>, Vec<usize>) = (0..d.n()).partition(|&i| d.t[i] == 1);
    if treated.is_empty() || control.is_empty() {
        return Err(Error::DegenerateSplit {
            treated: treated.len(),
            control: control.len(),
        });
    }
    let pi_empirical = treated.len() as f64 / d.n() as f64;
    Ok(GroupSplit {
        x_treated: d.x.select_rows(&treated),
        y_treated: treated.iter().map(|&i| d.y[i]).collect(),
        x_control: d.x.select_rows(&control),
        y_control: control.iter().map(|&i| d.y[i]).collect(),
        pi_empirical,
    })
}

/// Difference of observed group means.
pub fn naive_ate(split: &GroupSplit) -> f64 {
    mean(&split.y_treated) - mean(&split.y_control)
}

/// Mix the treated-side and control-side contrasts by `pi`.
pub fn combine_counterfactuals(
    y_treated: &[f64],
    yhat_treated: &[f64],
    y_control: &[f64],
    yhat_control: &[f64],
    pi: f64,
) -> f64 {
    let treated_side = mean(y_treated) - mean(yhat_treated);
    let control_side = mean(yhat_control) - mean(y_control);
    pi * treated_side + (1.0 - pi) * control_side
}

/// Fit `fit` on each group, cross-predict, and combine with the empirical
/// treated fraction. The treated model is fitted first, then the control
/// model, both drawing from `stream`.
pub fn estimate_ate<P, F>(split: &GroupSplit, mut fit: F, stream: &mut RngStream) -> Result<f64>
where
    P: Predictor,
    F: FnMut(&DesignMatrix, &[f64], &mut RngStream) -> Result<P>,
{
    let treated_model = fit(&split.x_treated, &split.y_treated, stream)?;
    let control_model = fit(&split.x_control, &split.y_control, stream)?;
    let yhat_treated = predict_rows(&control_model, &split.x_treated)?;
    let yhat_control = predict_rows(&treated_model, &split.x_control)?;
    Ok(combine_counterfactuals(
        &split.y_treated,
        &yhat_treated,
        &split.y_control,
        &yhat_control,
        split.pi_empirical,
    ))
}

fn predict_rows<P: Predictor>(model: &P, x: &DesignMatrix) -> Result<Vec<f64>> {
    x.iter_rows().map(|row| model.predict(row)).collect()
}

/// `|100 · (ate_sim − ate_true) / ate_true|`.
pub fn pct_error(ate_sim: f64, ate_true: f64) -> Result<f64> {
    if ate_true == 0.0 {
        return Err(Error::DivisionByZero);
    }
    Ok((100.0 * (ate_sim - ate_true) / ate_true).abs())
}

/// The naive contrast or one of the model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Estimator {
    Naive,
    Model(Method),
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [
        Estimator::Naive,
        Estimator::Model(Method::Lm),
        Estimator::Model(Method::Lasso),
        Estimator::Model(Method::Rf),
    ];

    pub fn label(self) -> &'static str {
        match self {
            Estimator::Naive => "Naive",
            Estimator::Model(m) => m.label(),
        }
    }

    /// Lower-case column prefix used in CSV output.
    pub fn key(self) -> &'static str {
        match self {
            Estimator::Naive => "naive",
            Estimator::Model(Method::Lm) => "lm",
            Estimator::Model(Method::Lasso) => "lasso",
            Estimator::Model(Method::Rf) => "rf",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodEstimate {
    pub method: Method,
    pub ate_sim: f64,
    pub error_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AteEstimates {
    pub ate_naive: f64,
    pub error_naive_pct: f64,
    pub pi_empirical: f64,
    /// In the order the methods were requested.
    pub methods: Vec<MethodEstimate>,
}

impl AteEstimates {
    pub fn get(&self, estimator: Estimator) -> Option<(f64, f64)> {
        match estimator {
            Estimator::Naive => Some((self.ate_naive, self.error_naive_pct)),
            Estimator::Model(m) => self
                .methods
                .iter()
                .find(|e| e.method == m)
                .map(|e| (e.ate_sim, e.error_pct)),
        }
    }
}

/// Naive contrast plus one counterfactual estimate per requested method.
/// Each method draws from its own stream, so the method set never changes
/// another method's result.
pub fn estimate_all(
    d: &Dataset,
    ate_true: f64,
    methods: &[Method],
    models: &ModelConfig,
    key: &ReplicateKey,
) -> Result<AteEstimates> {
    let split = split_by_treatment(d)?;
    let ate_naive = naive_ate(&split);
    let mut estimates = Vec::with_capacity(methods.len());
    for &method in methods {
        let mut stream = key.stream(purpose::MODEL + method.stream_offset());
        let ate_sim = estimate_ate(
            &split,
            |x, y, s: &mut RngStream| fit_method(method, x, y, models, s),
            &mut stream,
        )?;
        estimates.push(MethodEstimate {
            method,
            ate_sim,
            error_pct: pct_error(ate_sim, ate_true)?,
        });
    }
    Ok(AteEstimates {
        ate_naive,
        error_naive_pct: pct_error(ate_naive, ate_true)?,
        pi_empirical: split.pi_empirical,
        methods: estimates,
    })
}
