//! Forecaster contract, built-in models, black-box robustness wrappers,
//! validation-only winner selection and the external-model adapter.

mod external;
mod linear;
mod methods;
mod naive;
mod select;

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};

use crate::error::Result;

pub use external::{ExternalConfig, ExternalModel};
pub use linear::{fit_fault_augmented, fit_linear, LinearModel};
pub use methods::{
    ensemble_predict, fit_linear_ensemble, smoothed_predict, Aggregator, EnsembleForecaster,
    MethodVariant, SmoothedForecaster,
};
pub use naive::{seasonal_naive_predict, ConstantForecaster, SeasonalNaiveModel};
pub use select::{select_seasonal_period, select_winner, SelectorMode, ValidationWindows};

/// Maps an `n × m` input window to an `n' × m_tgt` prediction.
pub trait Forecaster: Send + Sync {
    fn id(&self) -> &str;

    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>>;

    /// Predict several windows. Implementations that talk to another process
    /// override this to batch requests.
    fn predict_batch(&self, xs: &[Array2<f64>]) -> Result<Vec<Array2<f64>>> {
        xs.iter().map(|x| self.predict(x.view())).collect()
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

impl<F: Forecaster + ?Sized> Forecaster for Arc<F> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        (**self).predict(x)
    }

    fn predict_batch(&self, xs: &[Array2<f64>]) -> Result<Vec<Array2<f64>>> {
        (**self).predict_batch(xs)
    }

    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }
}

impl<F: Forecaster + ?Sized> Forecaster for Box<F> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        (**self).predict(x)
    }

    fn predict_batch(&self, xs: &[Array2<f64>]) -> Result<Vec<Array2<f64>>> {
        (**self).predict_batch(xs)
    }

    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }
}
