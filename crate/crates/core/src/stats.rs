//! Small summation and moment helpers.

/// Neumaier-compensated sum. The result is within a couple of ulps of the
/// exact sum regardless of the order of the inputs.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Running mean/variance accumulator built on compensated sums.
#[derive(Debug, Clone, Default)]
pub struct Moments {
    values: Vec<f64>,
}

impl Moments {
    pub fn push(&mut self, v: f64) {
        self.values.push(v);
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return f64::NAN;
        }
        compensated_sum(self.values.iter().copied()) / self.values.len() as f64
    }

    /// Sample standard deviation (n - 1 denominator); zero for a single value.
    pub fn sd(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return if n == 1 { 0.0 } else { f64::NAN };
        }
        let m = self.mean();
        let ss = compensated_sum(self.values.iter().map(|v| (v - m) * (v - m)));
        (ss / (n - 1) as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
        assert_ne!(v.iter().sum::<f64>(), 2.0);
    }

    #[test]
    fn moments_of_small_sample() {
        let mut m = Moments::default();
        for v in [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0] {
            m.push(v);
        }
        assert_eq!(m.mean(), 5.0);
        assert!((m.sd() - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    }
}
