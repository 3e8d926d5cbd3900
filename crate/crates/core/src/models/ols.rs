use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrix::{check_row, DesignMatrix};

/// Relative size below which an R diagonal entry is treated as zero,
/// measured against the norm of the corresponding design column.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearFit {
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        check_row(row, self.coefficients.len())?;
        Ok(self.predict_unchecked(row))
    }

    pub(crate) fn predict_unchecked(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }
}

/// Least squares with an intercept, solved through a Householder QR of the
/// augmented design.
pub fn fit_ols(x: &DesignMatrix, y: &[f64]) -> Result<LinearFit> {
    x.check_training(y)?;
    let n = x.rows();
    let p = x.cols() + 1;
    if n < p {
        return Err(Error::InsufficientData { needed: p, found: n });
    }
    let design = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { x.get(i, j - 1) });
    let column_norms: Vec<f64> = (0..p).map(|j| design.column(j).norm()).collect();

    let qr = design.qr();
    let r = qr.r();
    for (j, &norm) in column_norms.iter().enumerate() {
        if norm == 0.0 || r[(j, j)].abs() <= RANK_TOL * norm {
            return Err(Error::SingularDesign);
        }
    }
    let qty = qr.q().transpose() * DVector::from_column_slice(y);
    let beta = r.solve_upper_triangular(&qty).ok_or(Error::SingularDesign)?;
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::SingularDesign);
    }
    Ok(LinearFit {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
    })
}

/// Free-function form of [`LinearFit::predict`].
pub fn predict_linear(fit: &LinearFit, row: &[f64]) -> Result<f64> {
    fit.predict(row)
}
