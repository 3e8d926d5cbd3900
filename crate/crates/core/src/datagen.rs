//! Synthetic student-grade datasets with a known, constant treatment effect.
//!
//! Covariates: two grade percentages (`x1`, `x3`), an age floored at 18
//! (`x2`) and a binary gender indicator (`x4`). The outcome is linear in
//! every covariate except `x1`, which enters raised to `degree`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DesignMatrix;
use crate::rng::{purpose, ReplicateKey, RngStream};

pub const N_COVARIATES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalSpec {
    pub mean: f64,
    pub sd: f64,
}

/// How draws of `x2` below the floor are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorMode {
    /// Replace the draw by the floor value.
    #[default]
    Clamp,
    /// Redraw until the value reaches the floor.
    Resample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovariateSpec {
    pub x1: NormalSpec,
    pub x2: NormalSpec,
    pub x2_floor: f64,
    pub x2_floor_mode: FloorMode,
    pub x3: NormalSpec,
    pub x4_prob: f64,
}

impl Default for CovariateSpec {
    fn default() -> Self {
        CovariateSpec {
            x1: NormalSpec { mean: 50.0, sd: 5.0 },
            x2: NormalSpec { mean: 20.0, sd: 2.0 },
            x2_floor: 18.0,
            x2_floor_mode: FloorMode::Clamp,
            x3: NormalSpec { mean: 45.0, sd: 6.0 },
            x4_prob: 0.6,
        }
    }
}

impl CovariateSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, spec) in [("x1", self.x1), ("x2", self.x2), ("x3", self.x3)] {
            if !(spec.sd > 0.0 && spec.sd.is_finite()) || !spec.mean.is_finite() {
                return Err(Error::config(
                    format!("covariates.{name}"),
                    "mean must be finite and sd positive",
                ));
            }
        }
        if !self.x2_floor.is_finite() {
            return Err(Error::config("covariates.x2_floor", "must be finite"));
        }
        if !(0.0..=1.0).contains(&self.x4_prob) {
            return Err(Error::config("covariates.x4_prob", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Fixed outcome coefficients; the effect size and degree vary per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutcomeCoefficients {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
    pub noise_sd: f64,
}

impl Default for OutcomeCoefficients {
    fn default() -> Self {
        OutcomeCoefficients {
            beta0: 0.5,
            beta1: 0.7,
            beta2: 0.5,
            beta3: 0.5,
            beta4: 0.7,
            noise_sd: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeParams {
    pub coefficients: OutcomeCoefficients,
    pub ate_true: f64,
    /// Exponent applied to `x1`; one of 1, 2, 3.
    pub degree: u32,
}

impl OutcomeParams {
    pub fn new(coefficients: OutcomeCoefficients, ate_true: f64, degree: u32) -> Self {
        OutcomeParams {
            coefficients,
            ate_true,
            degree,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.degree) {
            return Err(Error::invalid("degree", format!("must be 1, 2 or 3, got {}", self.degree)));
        }
        let c = &self.coefficients;
        if !(c.noise_sd >= 0.0 && c.noise_sd.is_finite()) {
            return Err(Error::invalid("noise_sd", "must be finite and non-negative"));
        }
        if [c.beta0, c.beta1, c.beta2, c.beta3, c.beta4, self.ate_true]
            .iter()
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("coefficients", "must be finite"));
        }
        Ok(())
    }

    /// Noise-free outcome for one covariate row and treatment status.
    pub fn mean_outcome(&self, row: &[f64], t: u8) -> f64 {
        let c = &self.coefficients;
        c.beta0
            + c.beta1 * row[0].powi(self.degree as i32)
            + c.beta2 * row[1]
            + c.beta3 * row[2]
            + c.beta4 * row[3]
            + self.ate_true * f64::from(t)
    }
}

/// Single-confounder assignment: treat below `lower`, never treat above
/// `upper`, and flip a `mid_prob` coin on the closed interval in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfoundingRule {
    pub lower: f64,
    pub upper: f64,
    pub mid_prob: f64,
}

impl Default for ConfoundingRule {
    fn default() -> Self {
        ConfoundingRule {
            lower: 41.0,
            upper: 49.0,
            mid_prob: 0.5,
        }
    }
}

impl ConfoundingRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.lower < self.upper) {
            return Err(Error::config(
                "confounding_rule",
                format!("lower ({}) must be below upper ({})", self.lower, self.upper),
            ));
        }
        if !(0.0..=1.0).contains(&self.mid_prob) {
            return Err(Error::config("confounding_rule.mid_prob", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreatmentRule {
    Randomized { pi: f64 },
    Confounded(ConfoundingRule),
}

/// One replicate's data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DesignMatrix,
    pub t: Vec<u8>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: DesignMatrix, t: Vec<u8>, y: Vec<f64>) -> Result<Self> {
        for len in [t.len(), y.len()] {
            if len != x.rows() {
                return Err(Error::Shape {
                    expected: x.rows(),
                    found: len,
                });
            }
        }
        if t.iter().any(|&v| v > 1) {
            return Err(Error::InvalidData("treatment must be 0 or 1".into()));
        }
        Ok(Dataset { x, t, y })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn n_treated(&self) -> usize {
        self.t.iter().filter(|&&v| v == 1).count()
    }
}

pub fn generate_covariates(n: usize, spec: &CovariateSpec, stream: &mut RngStream) -> Result<DesignMatrix> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    spec.validate()?;
    let mut values = Vec::with_capacity(n * N_COVARIATES);
    for _ in 0..n {
        let x1 = stream.normal(spec.x1.mean, spec.x1.sd)?;
        let x2 = draw_floored(spec, stream)?;
        let x3 = stream.normal(spec.x3.mean, spec.x3.sd)?;
        let x4 = f64::from(stream.bernoulli(spec.x4_prob)?);
        values.extend_from_slice(&[x1, x2, x3, x4]);
    }
    DesignMatrix::new(n, N_COVARIATES, values)
}

fn draw_floored(spec: &CovariateSpec, stream: &mut RngStream) -> Result<f64> {
    const MAX_REDRAWS: usize = 10_000;
    match spec.x2_floor_mode {
        FloorMode::Clamp => Ok(stream.normal(spec.x2.mean, spec.x2.sd)?.max(spec.x2_floor)),
        FloorMode::Resample => {
            for _ in 0..MAX_REDRAWS {
                let v = stream.normal(spec.x2.mean, spec.x2.sd)?;
                if v >= spec.x2_floor {
                    return Ok(v);
                }
            }
            Err(Error::invalid(
                "x2_floor",
                "floor is too far in the tail for rejection sampling",
            ))
        }
    }
}

pub fn assign_randomized(n: usize, pi: f64, stream: &mut RngStream) -> Result<Vec<u8>> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(Error::invalid("pi", format!("must lie in [0, 1], got {pi}")));
    }
    (0..n).map(|_| stream.bernoulli(pi)).collect()
}

pub fn assign_confounded(x3: &[f64], rule: &ConfoundingRule, stream: &mut RngStream) -> Result<Vec<u8>> {
    rule.validate()?;
    x3.iter()
        .map(|&v| {
            if v < rule.lower {
                Ok(1)
            } else if v > rule.upper {
                Ok(0)
            } else {
                stream.bernoulli(rule.mid_prob)
            }
        })
        .collect()
}

pub fn generate_outcome(
    x: &DesignMatrix,
    t: &[u8],
    params: &OutcomeParams,
    stream: &mut RngStream,
) -> Result<Vec<f64>> {
    if x.cols() != N_COVARIATES {
        return Err(Error::Shape {
            expected: N_COVARIATES,
            found: x.cols(),
        });
    }
    if t.len() != x.rows() {
        return Err(Error::Shape {
            expected: x.rows(),
            found: t.len(),
        });
    }
    params.validate()?;
    let noise_sd = params.coefficients.noise_sd;
    x.iter_rows()
        .zip(t)
        .map(|(row, &ti)| {
            let noise = if noise_sd > 0.0 { stream.normal(0.0, noise_sd)? } else { 0.0 };
            Ok(params.mean_outcome(row, ti) + noise)
        })
        .collect()
}

/// Everything needed to generate the replicates of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDataSpec {
    pub n_samples: usize,
    pub covariates: CovariateSpec,
    pub outcome: OutcomeParams,
    pub treatment: TreatmentRule,
    pub master_seed: u64,
    pub cell_index: u64,
}

impl CellDataSpec {
    pub fn replicate_key(&self, replicate_index: u64, attempt: u64) -> ReplicateKey {
        ReplicateKey {
            master_seed: self.master_seed,
            cell_index: self.cell_index,
            replicate_index,
            attempt,
        }
    }
}

/// Generate one replicate. `attempt` shifts every purpose tag so that a
/// redraw after a degenerate split uses fresh, still reproducible streams.
pub fn generate_dataset(spec: &CellDataSpec, replicate_index: u64, attempt: u64) -> Result<Dataset> {
    let key = spec.replicate_key(replicate_index, attempt);
    let mut cov_stream = key.stream(purpose::COVARIATES);
    let mut treat_stream = key.stream(purpose::TREATMENT);
    let mut noise_stream = key.stream(purpose::OUTCOME_NOISE);

    let x = generate_covariates(spec.n_samples, &spec.covariates, &mut cov_stream)?;
    let t = match &spec.treatment {
        TreatmentRule::Randomized { pi } => assign_randomized(x.rows(), *pi, &mut treat_stream)?,
        TreatmentRule::Confounded(rule) => {
            let x3: Vec<f64> = x.column(2).collect();
            assign_confounded(&x3, rule, &mut treat_stream)?
        }
    };
    let y = generate_outcome(&x, &t, &spec.outcome, &mut noise_stream)?;
    let dataset = Dataset::new(x, t, y)?;
    let treated = dataset.n_treated();
    if treated == 0 || treated == dataset.n() {
        return Err(Error::DegenerateSplit {
            treated,
            control: dataset.n() - treated,
        });
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn row() -> [f64; 4] {
        [50.0, 20.0, 45.0, 1.0]
    }

    fn noise_free(ate_true: f64, degree: u32) -> OutcomeParams {
        let coefficients = OutcomeCoefficients {
            noise_sd: 0.0,
            ..Default::default()
        };
        OutcomeParams::new(coefficients, ate_true, degree)
    }

    #[test]
    fn linear_outcome_by_hand() {
        let x = DesignMatrix::from_rows(&[row()]).unwrap();
        let mut s = derive_stream(0, 0, 0, 2);
        let y = generate_outcome(&x, &[1], &noise_free(5.0, 1), &mut s).unwrap();
        assert!((y[0] - 73.7).abs() < 1e-12);
    }

    #[test]
    fn squared_outcome_by_hand() {
        let x = DesignMatrix::from_rows(&[row()]).unwrap();
        let mut s = derive_stream(0, 0, 0, 2);
        let y = generate_outcome(&x, &[0], &noise_free(5.0, 2), &mut s).unwrap();
        assert!((y[0] - 1783.7).abs() < 1e-9);
    }

    #[test]
    fn treatment_shift_is_exact() {
        let x = DesignMatrix::from_rows(&[row(), row()]).unwrap();
        for degree in 1..=3 {
            let mut s = derive_stream(0, 0, 0, 2);
            let y = generate_outcome(&x, &[1, 0], &noise_free(-7.25, degree), &mut s).unwrap();
            assert_eq!(y[0] - y[1], -7.25);
        }
    }

    #[test]
    fn outcome_shape_mismatch() {
        let x = DesignMatrix::from_rows(&[row()]).unwrap();
        let mut s = derive_stream(0, 0, 0, 2);
        assert!(matches!(
            generate_outcome(&x, &[1, 0], &noise_free(1.0, 1), &mut s),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn confounded_strict_regions() {
        let mut s = derive_stream(0, 0, 0, 1);
        let t = assign_confounded(&[30.0, 60.0, 40.9], &ConfoundingRule::default(), &mut s).unwrap();
        assert_eq!(t, vec![1, 0, 1]);
    }

    #[test]
    fn confounded_rule_validation() {
        let mut s = derive_stream(0, 0, 0, 1);
        let rule = ConfoundingRule {
            lower: 49.0,
            upper: 41.0,
            mid_prob: 0.5,
        };
        assert!(assign_confounded(&[45.0], &rule, &mut s).is_err());
    }

    #[test]
    fn randomized_endpoints_and_validation() {
        let mut s = derive_stream(0, 0, 0, 1);
        assert!(assign_randomized(500, 0.0, &mut s).unwrap().iter().all(|&v| v == 0));
        assert!(assign_randomized(500, 1.0, &mut s).unwrap().iter().all(|&v| v == 1));
        assert!(assign_randomized(5, 1.5, &mut s).is_err());
    }

    #[test]
    fn empty_covariates_rejected() {
        let mut s = derive_stream(0, 0, 0, 0);
        assert!(matches!(
            generate_covariates(0, &CovariateSpec::default(), &mut s),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn resample_mode_respects_floor() {
        let spec = CovariateSpec {
            x2_floor_mode: FloorMode::Resample,
            ..Default::default()
        };
        let mut s = derive_stream(3, 0, 0, 0);
        let x = generate_covariates(5_000, &spec, &mut s).unwrap();
        let col: Vec<f64> = x.column(1).collect();
        assert!(col.iter().all(|&v| v >= 18.0));
        // rejection leaves no point mass at the floor
        assert!(col.iter().all(|&v| v != 18.0));
    }

    #[test]
    fn degenerate_dataset_is_an_error() {
        let spec = CellDataSpec {
            n_samples: 20,
            covariates: CovariateSpec::default(),
            outcome: noise_free(1.0, 1),
            treatment: TreatmentRule::Randomized { pi: 1.0 },
            master_seed: 1,
            cell_index: 0,
        };
        assert!(matches!(
            generate_dataset(&spec, 0, 0),
            Err(Error::DegenerateSplit { treated: 20, control: 0 })
        ));
    }
}
