use ndarray::{Array2, ArrayView2};

use super::Forecaster;
use crate::error::{Error, Result};

/// Repeat the last `period` observed target values across the horizon:
/// `ŷ[t, j] = x[n − P + (t mod P), target_j]` (0-based `t`).
pub fn seasonal_naive_predict(
    x: ArrayView2<'_, f64>,
    period: usize,
    horizon: usize,
    targets: &[usize],
) -> Result<Array2<f64>> {
    let n = x.nrows();
    if period == 0 || period > n {
        return Err(Error::InvalidArgument(format!(
            "seasonal period {period} must be in 1..={n}"
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= x.ncols()) {
        return Err(Error::InvalidArgument(format!(
            "target channel {t} out of range"
        )));
    }
    Ok(Array2::from_shape_fn((horizon, targets.len()), |(t, j)| {
        x[[n - period + (t % period), targets[j]]]
    }))
}

#[derive(Debug, Clone)]
pub struct SeasonalNaiveModel {
    id: String,
    period: usize,
    horizon: usize,
    targets: Vec<usize>,
}

impl SeasonalNaiveModel {
    pub fn new(period: usize, horizon: usize, targets: Vec<usize>) -> Self {
        Self {
            id: format!("seasonal-naive(P={period})"),
            period,
            horizon,
            targets,
        }
    }

    /// Period-1 seasonal naive.
    pub fn last_value(horizon: usize, targets: Vec<usize>) -> Self {
        Self::new(1, horizon, targets)
    }

    pub fn period(&self) -> usize {
        self.period
    }
}

impl Forecaster for SeasonalNaiveModel {
    fn id(&self) -> &str {
        &self.id
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        seasonal_naive_predict(x, self.period, self.horizon, &self.targets)
    }
}

/// Ignores its input and always returns the same prediction.
#[derive(Debug, Clone)]
pub struct ConstantForecaster {
    id: String,
    value: Array2<f64>,
}

impl ConstantForecaster {
    pub fn new(value: Array2<f64>) -> Self {
        Self {
            id: "constant".into(),
            value,
        }
    }
}

impl Forecaster for ConstantForecaster {
    fn id(&self) -> &str {
        &self.id
    }

    fn predict(&self, _x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.value.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn last_value_repeats() {
        let x = Array2::from_shape_fn((5, 2), |(i, j)| (i * 10 + j) as f64);
        let y = seasonal_naive_predict(x.view(), 1, 3, &[1]).unwrap();
        assert!(y.iter().all(|&v| v == 41.0));
        assert_eq!(y.dim(), (3, 1));
    }

    #[test]
    fn daily_period_tiles() {
        let x = Array2::from_shape_fn((96, 1), |(i, _)| i as f64);
        let y = seasonal_naive_predict(x.view(), 24, 96, &[0]).unwrap();
        for t in 0..96 {
            assert_eq!(y[[t, 0]], (72 + t % 24) as f64);
        }
    }

    #[test]
    fn constant_input_constant_output() {
        let x = Array2::from_elem((10, 3), 2.5);
        for p in 1..=10 {
            let y = seasonal_naive_predict(x.view(), p, 7, &[0, 2]).unwrap();
            assert!(y.iter().all(|&v| v == 2.5));
        }
    }

    #[test]
    fn period_longer_than_window_rejected() {
        let x = Array2::zeros((4, 1));
        assert!(seasonal_naive_predict(x.view(), 5, 2, &[0]).is_err());
        assert!(seasonal_naive_predict(x.view(), 0, 2, &[0]).is_err());
    }
}
