use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{fit_linear, Forecaster};
use crate::dataset::WindowSample;
use crate::error::{Error, Result};
use crate::faults::ScenarioId;
use crate::rng::{mix64, tag, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    #[default]
    Mean,
    Median,
}

/// A black-box robustness method layered on a base forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MethodVariant {
    Baseline,
    Ensemble {
        #[serde(default = "default_members")]
        members: usize,
        #[serde(default)]
        aggregator: Aggregator,
    },
    RandomizedSmoothing {
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default = "default_queries")]
        queries: usize,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    FaultAugmentation {
        p_aug: f64,
        #[serde(default = "default_pool")]
        pool: Vec<ScenarioId>,
    },
}

fn default_members() -> usize {
    3
}
fn default_sigma() -> f64 {
    0.1
}
fn default_queries() -> usize {
    32
}
fn default_alpha() -> f64 {
    0.1
}
fn default_pool() -> Vec<ScenarioId> {
    crate::faults::TRANSFER.to_vec()
}

impl MethodVariant {
    pub fn name(&self) -> &'static str {
        match self {
            MethodVariant::Baseline => "baseline",
            MethodVariant::Ensemble { .. } => "ensemble",
            MethodVariant::RandomizedSmoothing { .. } => "randomized-smoothing",
            MethodVariant::FaultAugmentation { .. } => "fault-augmentation",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MethodVariant::Baseline => Ok(()),
            MethodVariant::Ensemble { members, .. } if members < 2 => Err(Error::InvalidArgument(
                format!("ensemble needs at least 2 members, got {members}"),
            )),
            MethodVariant::Ensemble { .. } => Ok(()),
            MethodVariant::RandomizedSmoothing {
                sigma,
                queries,
                alpha,
            } => check_smoothing(sigma, queries, alpha),
            MethodVariant::FaultAugmentation { p_aug, ref pool } => {
                if !(0.0..=1.0).contains(&p_aug) {
                    return Err(Error::InvalidArgument(format!(
                        "p_aug {p_aug} outside [0, 1]"
                    )));
                }
                if let Some(p) = pool.iter().find(|p| p.is_benchmark()) {
                    return Err(Error::ProtocolViolation(format!(
                        "{p} is scored at test time and cannot be used for training"
                    )));
                }
                Ok(())
            }
        }
    }
}

fn check_smoothing(sigma: f64, queries: usize, alpha: f64) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "smoothing sigma {sigma} must be >= 0"
        )));
    }
    if queries == 0 {
        return Err(Error::InvalidArgument(
            "smoothing needs at least one query".into(),
        ));
    }
    if !(0.0..0.5).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "trim fraction {alpha} outside [0, 0.5)"
        )));
    }
    Ok(())
}

/// Mean of sorted values anchored at the smallest, so equal inputs return
/// that value exactly and the result does not depend on input order.
fn anchored_mean(sorted: &[f64]) -> f64 {
    let lo = sorted[0];
    lo + sorted.iter().fold(0.0, |acc, &v| acc + (v - lo)) / sorted.len() as f64
}

fn median(sorted: &[f64]) -> f64 {
    let k = sorted.len();
    if k % 2 == 1 {
        sorted[k / 2]
    } else {
        anchored_mean(&sorted[k / 2 - 1..=k / 2])
    }
}

/// Combine equally shaped predictions coordinate by coordinate.
fn combine(preds: &[Array2<f64>], reduce: impl Fn(&[f64]) -> f64) -> Result<Array2<f64>> {
    let shape = preds[0].dim();
    if let Some(p) = preds.iter().find(|p| p.dim() != shape) {
        return Err(Error::ShapeMismatch {
            expected: shape,
            got: p.dim(),
        });
    }
    let mut buf = vec![0.0; preds.len()];
    Ok(Array2::from_shape_fn(shape, |ix| {
        for (b, p) in buf.iter_mut().zip(preds) {
            *b = p[ix];
        }
        buf.sort_by(f64::total_cmp);
        reduce(&buf)
    }))
}

pub fn ensemble_predict(
    members: &[Arc<dyn Forecaster>],
    x: ArrayView2<'_, f64>,
    aggregator: Aggregator,
) -> Result<Array2<f64>> {
    if members.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "ensemble needs at least 2 members, got {}",
            members.len()
        )));
    }
    let preds = members
        .iter()
        .map(|m| m.predict(x))
        .collect::<Result<Vec<_>>>()?;
    match aggregator {
        Aggregator::Mean => combine(&preds, anchored_mean),
        Aggregator::Median => combine(&preds, median),
    }
}

pub struct EnsembleForecaster {
    id: String,
    members: Vec<Arc<dyn Forecaster>>,
    aggregator: Aggregator,
}

impl EnsembleForecaster {
    pub fn new(members: Vec<Arc<dyn Forecaster>>, aggregator: Aggregator) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "ensemble needs at least 2 members, got {}",
                members.len()
            )));
        }
        let id = format!(
            "ensemble({}x{},{})",
            members.len(),
            members[0].id(),
            match aggregator {
                Aggregator::Mean => "mean",
                Aggregator::Median => "median",
            }
        );
        Ok(Self {
            id,
            members,
            aggregator,
        })
    }

    pub fn members(&self) -> &[Arc<dyn Forecaster>] {
        &self.members
    }
}

impl Forecaster for EnsembleForecaster {
    fn id(&self) -> &str {
        &self.id
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        ensemble_predict(&self.members, x, self.aggregator)
    }

    fn is_deterministic(&self) -> bool {
        self.members.iter().all(|m| m.is_deterministic())
    }
}

/// Linear members fit on bootstrap resamples of the training windows, one
/// derived seed per member.
pub fn fit_linear_ensemble(
    train: &[WindowSample],
    lambda: f64,
    members: usize,
    aggregator: Aggregator,
    seed: u64,
) -> Result<EnsembleForecaster> {
    if train.is_empty() {
        return Err(Error::EmptyIndexSet("no training windows".into()));
    }
    let fitted = (0..members)
        .map(|i| {
            let mut stream = Stream::keyed(seed, &[tag::MEMBER, i as u64]);
            let resample: Vec<WindowSample> = (0..train.len())
                .map(|_| train[stream.below(train.len() as u64) as usize].clone())
                .collect();
            let model = fit_linear(&resample, lambda, stream.next_u64())?;
            Ok(Arc::new(model) as Arc<dyn Forecaster>)
        })
        .collect::<Result<Vec<_>>>()?;
    EnsembleForecaster::new(fitted, aggregator)
}

/// Query `base` on `Q` noisy copies `x + σZ` and take an alpha-trimmed mean
/// per output coordinate, dropping `floor(αQ)` values from each tail.
pub fn smoothed_predict(
    base: &dyn Forecaster,
    x: ArrayView2<'_, f64>,
    sigma: f64,
    queries: usize,
    alpha: f64,
    stream: &mut Stream,
) -> Result<Array2<f64>> {
    check_smoothing(sigma, queries, alpha)?;
    let noisy: Vec<Array2<f64>> = (0..queries)
        .map(|_| {
            let mut q = x.to_owned();
            q.iter_mut().for_each(|v| *v += sigma * stream.normal());
            q
        })
        .collect();
    let preds = base.predict_batch(&noisy)?;
    let trim = (alpha * queries as f64).floor() as usize;
    combine(&preds, |sorted| {
        anchored_mean(&sorted[trim..sorted.len() - trim])
    })
}

pub struct SmoothedForecaster {
    id: String,
    base: Arc<dyn Forecaster>,
    sigma: f64,
    queries: usize,
    alpha: f64,
    seed: u64,
}

impl SmoothedForecaster {
    pub fn new(
        base: Arc<dyn Forecaster>,
        sigma: f64,
        queries: usize,
        alpha: f64,
        seed: u64,
    ) -> Result<Self> {
        check_smoothing(sigma, queries, alpha)?;
        Ok(Self {
            id: format!(
                "smoothed({},sigma={sigma},Q={queries},alpha={alpha})",
                base.id()
            ),
            base,
            sigma,
            queries,
            alpha,
            seed,
        })
    }
}

impl Forecaster for SmoothedForecaster {
    fn id(&self) -> &str {
        &self.id
    }

    /// The noise stream is keyed by the seed and the input's bit pattern, so
    /// the wrapper is a deterministic function of `x`.
    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let digest = x.iter().fold(x.len() as u64, |h, v| mix64(h ^ v.to_bits()));
        let mut stream = Stream::keyed(self.seed, &[tag::SMOOTH, digest]);
        smoothed_predict(
            self.base.as_ref(),
            x,
            self.sigma,
            self.queries,
            self.alpha,
            &mut stream,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::ConstantForecaster;
    use ndarray::Array2;

    fn constant(v: f64) -> Arc<dyn Forecaster> {
        Arc::new(ConstantForecaster::new(Array2::from_elem((3, 2), v)))
    }

    /// Returns the input's first `h` rows of column 0 unchanged.
    struct Passthrough;
    impl Forecaster for Passthrough {
        fn id(&self) -> &str {
            "passthrough"
        }
        fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
            Ok(x.slice(ndarray::s![..1, ..]).to_owned())
        }
    }

    #[test]
    fn identical_members_reproduce_member() {
        let v = 0.1 + 0.2;
        let members = vec![constant(v), constant(v), constant(v)];
        let x = Array2::zeros((4, 2));
        let out = ensemble_predict(&members, x.view(), Aggregator::Mean).unwrap();
        assert!(out.iter().all(|&o| o.to_bits() == v.to_bits()));
    }

    #[test]
    fn mean_and_median() {
        let x = Array2::zeros((4, 2));
        let two = vec![constant(0.0), constant(2.0)];
        assert!(ensemble_predict(&two, x.view(), Aggregator::Mean)
            .unwrap()
            .iter()
            .all(|&v| v == 1.0));
        let three = vec![constant(0.0), constant(0.0), constant(10.0)];
        assert!(ensemble_predict(&three, x.view(), Aggregator::Median)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn mean_is_permutation_invariant() {
        let x = Array2::zeros((1, 1));
        let vals = [0.1, 1e-17, 3.3, -2.7, 1e5];
        let a: Vec<_> = vals.iter().map(|&v| constant(v)).collect();
        let b: Vec<_> = vals.iter().rev().map(|&v| constant(v)).collect();
        assert_eq!(
            ensemble_predict(&a, x.view(), Aggregator::Mean).unwrap(),
            ensemble_predict(&b, x.view(), Aggregator::Mean).unwrap()
        );
    }

    #[test]
    fn single_member_and_shape_mismatch_rejected() {
        let x = Array2::zeros((1, 1));
        assert!(ensemble_predict(&[constant(1.0)], x.view(), Aggregator::Mean).is_err());
        let odd: Arc<dyn Forecaster> = Arc::new(ConstantForecaster::new(Array2::zeros((2, 2))));
        assert!(matches!(
            ensemble_predict(&[constant(1.0), odd], x.view(), Aggregator::Mean),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn trimmed_mean_drops_tails() {
        let preds: Vec<Array2<f64>> = [0.0, 1.0, 2.0, 3.0, 100.0]
            .iter()
            .map(|&v| Array2::from_elem((1, 1), v))
            .collect();
        let trim = (0.2_f64 * 5.0).floor() as usize;
        let out = combine(&preds, |s| anchored_mean(&s[trim..s.len() - trim])).unwrap();
        assert_eq!(out[[0, 0]], 2.0);
    }

    #[test]
    fn zero_sigma_is_base() {
        let x = Array2::from_shape_fn((3, 2), |(i, j)| (i + 3 * j) as f64 * 0.7);
        let out = smoothed_predict(
            &Passthrough,
            x.view(),
            0.0,
            7,
            0.2,
            &mut Stream::from_seed(1),
        )
        .unwrap();
        assert_eq!(out, Passthrough.predict(x.view()).unwrap());
    }

    #[test]
    fn smoothing_is_repeatable() {
        let f = SmoothedForecaster::new(Arc::new(Passthrough), 0.3, 16, 0.1, 5).unwrap();
        let x = Array2::from_elem((3, 2), 1.5);
        assert_eq!(f.predict(x.view()).unwrap(), f.predict(x.view()).unwrap());
    }

    #[test]
    fn smoothing_parameters_checked() {
        assert!(SmoothedForecaster::new(Arc::new(Passthrough), 0.1, 0, 0.1, 0).is_err());
        assert!(SmoothedForecaster::new(Arc::new(Passthrough), 0.1, 4, 0.5, 0).is_err());
        assert!(SmoothedForecaster::new(Arc::new(Passthrough), -1.0, 4, 0.1, 0).is_err());
    }

    #[test]
    fn method_variant_toml_shape() {
        let v: MethodVariant = serde_json::from_str(r#"{"kind":"ensemble"}"#).unwrap();
        assert_eq!(
            v,
            MethodVariant::Ensemble {
                members: 3,
                aggregator: Aggregator::Mean
            }
        );
        let bad: MethodVariant =
            serde_json::from_str(r#"{"kind":"fault-augmentation","p_aug":0.5,"pool":["Drift"]}"#)
                .unwrap();
        assert!(matches!(bad.validate(), Err(Error::ProtocolViolation(_))));
    }
}
