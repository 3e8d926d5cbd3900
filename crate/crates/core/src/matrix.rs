use crate::error::{Error, Result};

/// Dense row-major matrix of covariates. The intercept is never stored;
/// models that need one add it themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape {
                expected: rows * cols,
                found: values.len(),
            });
        }
        Ok(DesignMatrix { rows, cols, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::Shape {
                    expected: cols,
                    found: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Ok(DesignMatrix {
            rows: rows.len(),
            cols,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact on an empty-column matrix would panic
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.rows).map(move |i| self.get(i, j))
    }

    pub fn select_rows(&self, indices: &[usize]) -> DesignMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        DesignMatrix {
            rows: indices.len(),
            cols: self.cols,
            values,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_training(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.rows {
            return Err(Error::Shape {
                expected: self.rows,
                found: y.len(),
            });
        }
        if !self.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite value in training data".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_row(row: &[f64], cols: usize) -> Result<()> {
    if row.len() != cols {
        return Err(Error::Shape {
            expected: cols,
            found: row.len(),
        });
    }
    Ok(())
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    crate::stats::compensated_sum(values.iter().copied()) / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_rows_rejects_ragged_input() {
        let err = DesignMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).unwrap_err();
        assert!(matches!(err, Error::Shape { expected: 2, found: 1 }));
    }

    #[test]
    fn select_rows_preserves_order() {
        let m = DesignMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let s = m.select_rows(&[2, 0]);
        assert_eq!(s.row(0), &[5.0, 6.0]);
        assert_eq!(s.row(1), &[1.0, 2.0]);
        assert_eq!(s.column(1).collect::<Vec<_>>(), vec![6.0, 2.0]);
    }
}
