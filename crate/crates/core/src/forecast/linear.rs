use nalgebra::{Cholesky, DMatrix};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::Forecaster;
use crate::dataset::{ChannelSchema, WindowSample};
use crate::error::{Error, Result};
use crate::faults::{apply_transfer, ScenarioId};
use crate::rng::{tag, Stream};

/// Ridge regression from the flattened `n × m` input to the flattened
/// `n' × m_tgt` target. Inputs and targets are centered before the solve so
/// the bias is not penalized.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    id: String,
    weights: Array2<f64>,
    bias: Array1<f64>,
    input: (usize, usize),
    output: (usize, usize),
    ridge_lambda: f64,
    train_seed: u64,
}

impl LinearModel {
    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn ridge_lambda(&self) -> f64 {
        self.ridge_lambda
    }

    pub fn train_seed(&self) -> u64 {
        self.train_seed
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

impl Forecaster for LinearModel {
    fn id(&self) -> &str {
        &self.id
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.dim() != self.input {
            return Err(Error::ShapeMismatch {
                expected: self.input,
                got: x.dim(),
            });
        }
        let flat: Array1<f64> = x.iter().copied().collect();
        let out = flat.dot(&self.weights) + &self.bias;
        Ok(out
            .into_shape_with_order(self.output)
            .expect("output size fixed at fit time"))
    }
}

/// Stacked inputs, stacked targets, and the input and output window shapes.
type Design = (Array2<f64>, Array2<f64>, (usize, usize), (usize, usize));

fn design(train: &[WindowSample]) -> Result<Design> {
    let first = train
        .first()
        .ok_or_else(|| Error::EmptyIndexSet("no training windows".into()))?;
    let input = first.x.dim();
    let output = first.y.dim();
    let (d, q) = (input.0 * input.1, output.0 * output.1);
    let mut xs = Array2::zeros((train.len(), d));
    let mut ys = Array2::zeros((train.len(), q));
    for (r, w) in train.iter().enumerate() {
        if w.x.dim() != input {
            return Err(Error::ShapeMismatch {
                expected: input,
                got: w.x.dim(),
            });
        }
        if w.y.dim() != output {
            return Err(Error::ShapeMismatch {
                expected: output,
                got: w.y.dim(),
            });
        }
        xs.row_mut(r)
            .iter_mut()
            .zip(w.x.iter())
            .for_each(|(d, &s)| *d = s);
        ys.row_mut(r)
            .iter_mut()
            .zip(w.y.iter())
            .for_each(|(d, &s)| *d = s);
    }
    Ok((xs, ys, input, output))
}

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Fit ridge regression with penalty `lambda` on the windows' flattened
/// inputs. `seed` is recorded for provenance; the solve itself is
/// deterministic.
pub fn fit_linear(train: &[WindowSample], lambda: f64, seed: u64) -> Result<LinearModel> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "ridge penalty {lambda} must be finite and >= 0"
        )));
    }
    let (mut xs, mut ys, input, output) = design(train)?;
    let x_mean = xs.mean_axis(Axis(0)).expect("non-empty");
    let y_mean = ys.mean_axis(Axis(0)).expect("non-empty");
    xs -= &x_mean;
    ys -= &y_mean;

    let mut gram = xs.t().dot(&xs);
    for i in 0..gram.nrows() {
        gram[[i, i]] += lambda;
    }
    let rhs = xs.t().dot(&ys);
    let max_diag = gram.diag().iter().fold(0.0_f64, |a, &v| a.max(v));

    let chol = Cholesky::new(to_dmatrix(&gram)).ok_or(Error::Singular)?;
    if lambda == 0.0 {
        let min_pivot = chol
            .l_dirty()
            .diagonal()
            .iter()
            .fold(f64::INFINITY, |a, &v| a.min(v * v));
        if !(min_pivot > 1e-12 * max_diag) {
            return Err(Error::Singular);
        }
    }
    let w = chol.solve(&to_dmatrix(&rhs));
    let weights = Array2::from_shape_fn((w.nrows(), w.ncols()), |(i, j)| w[(i, j)]);
    if weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    let bias = &y_mean - &x_mean.dot(&weights);
    Ok(LinearModel {
        id: format!("linear(lambda={lambda:e})"),
        weights,
        bias,
        input,
        output,
        ridge_lambda: lambda,
        train_seed: seed,
    })
}

/// Fit a linear model on inputs perturbed by training-only transfer
/// families. Each window is augmented with probability `p_aug` by one family
/// drawn uniformly from `pool` at `s ~ U(0,1)`. Targets are untouched.
pub fn fit_fault_augmented(
    train: &[WindowSample],
    lambda: f64,
    p_aug: f64,
    pool: &[ScenarioId],
    schema: &ChannelSchema,
    seed: u64,
) -> Result<LinearModel> {
    if let Some(p) = pool.iter().find(|p| p.is_benchmark()) {
        return Err(Error::ProtocolViolation(format!(
            "{p} is scored at test time and cannot be used for training"
        )));
    }
    if pool.is_empty() {
        return Err(Error::InvalidArgument("augmentation pool is empty".into()));
    }
    if !(0.0..=1.0).contains(&p_aug) {
        return Err(Error::InvalidArgument(format!(
            "p_aug {p_aug} outside [0, 1]"
        )));
    }
    let augmented = train
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let mut stream = Stream::keyed(seed, &[tag::AUGMENT, i as u64]);
            if !stream.bernoulli(p_aug) {
                return Ok(w.clone());
            }
            let family = pool[stream.below(pool.len() as u64) as usize];
            let s = stream.uniform();
            Ok(WindowSample {
                x: apply_transfer(w.x.view(), family, s, schema, &mut stream)?,
                y: w.y.clone(),
                start: w.start,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let names: Vec<&str> = pool.iter().map(|p| p.name()).collect();
    Ok(fit_linear(&augmented, lambda, seed)?.with_id(format!(
        "fault-augmented(lambda={lambda:e},p={p_aug},pool={})",
        names.join("+")
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faults::{BENCHMARK, TRANSFER};

    fn noise_windows(count: usize, n: usize, m: usize, seed: u64) -> Vec<WindowSample> {
        let mut s = Stream::from_seed(seed);
        (0..count)
            .map(|start| {
                let x = Array2::from_shape_simple_fn((n, m), || s.normal());
                let y = Array2::from_elem((3, 1), x[[n - 1, 0]]);
                WindowSample { x, y, start }
            })
            .collect()
    }

    fn schema(m: usize) -> ChannelSchema {
        ChannelSchema::all_continuous((0..m).map(|j| format!("c{j}")).collect(), vec![0]).unwrap()
    }

    #[test]
    fn copy_task_recovered() {
        let train = noise_windows(200, 8, 2, 1);
        let model = fit_linear(&train, 1e-8, 0).unwrap();
        let mse: f64 = train
            .iter()
            .map(|w| {
                let p = model.predict(w.x.view()).unwrap();
                (&p - &w.y).mapv(|v| v * v).mean().unwrap()
            })
            .sum::<f64>()
            / train.len() as f64;
        assert!(mse < 1e-10, "training mse {mse}");
    }

    #[test]
    fn zero_targets_give_zero_predictions() {
        let mut train = noise_windows(50, 4, 2, 2);
        train.iter_mut().for_each(|w| w.y.fill(0.0));
        let model = fit_linear(&train, 1e-3, 0).unwrap();
        let p = model.predict(train[0].x.view()).unwrap();
        assert!(p.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn heavy_ridge_collapses_to_mean() {
        let mut train = noise_windows(100, 4, 1, 3);
        for (i, w) in train.iter_mut().enumerate() {
            w.y += i as f64;
        }
        let target_mean = train.iter().map(|w| w.y.mean().unwrap()).sum::<f64>() / 100.0;
        let model = fit_linear(&train, 1e6, 0).unwrap();
        let p = model.predict(train[7].x.view()).unwrap();
        assert!(p.iter().all(|v| (v - target_mean).abs() < 0.05), "{p}");
    }

    #[test]
    fn unregularized_rank_deficiency_is_singular() {
        let mut train = noise_windows(50, 4, 2, 4);
        // duplicate channel makes the Gram matrix rank deficient
        for w in &mut train {
            let c0 = w.x.column(0).to_owned();
            w.x.column_mut(1).assign(&c0);
        }
        assert!(matches!(fit_linear(&train, 0.0, 0), Err(Error::Singular)));
        assert!(fit_linear(&train, 1e-3, 0).is_ok());
    }

    #[test]
    fn refit_is_bit_identical() {
        let train = noise_windows(60, 6, 2, 5);
        assert_eq!(
            fit_linear(&train, 1e-2, 9).unwrap(),
            fit_linear(&train, 1e-2, 9).unwrap()
        );
    }

    #[test]
    fn no_augmentation_matches_plain_fit() {
        let train = noise_windows(40, 6, 2, 6);
        let plain = fit_linear(&train, 1e-2, 11).unwrap();
        let aug = fit_fault_augmented(&train, 1e-2, 0.0, &TRANSFER, &schema(2), 11).unwrap();
        assert_eq!(plain.weights(), aug.weights());
        assert_eq!(plain.bias(), aug.bias());
    }

    #[test]
    fn benchmark_scenarios_never_train() {
        let train = noise_windows(10, 6, 2, 7);
        for p in BENCHMARK {
            assert!(matches!(
                fit_fault_augmented(&train, 1e-2, 0.5, &[ScenarioId::Scaling, p], &schema(2), 0),
                Err(Error::ProtocolViolation(_))
            ));
        }
    }

    #[test]
    fn full_scaling_augmentation_alters_inputs() {
        let train = noise_windows(30, 6, 2, 8);
        for (i, w) in train.iter().enumerate() {
            let mut stream = Stream::keyed(3, &[tag::AUGMENT, i as u64]);
            assert!(stream.bernoulli(1.0));
            let _family = stream.below(1);
            let s = stream.uniform();
            let out = apply_transfer(w.x.view(), ScenarioId::Scaling, s, &schema(2), &mut stream)
                .unwrap();
            if s > 0.0 {
                assert_ne!(out, w.x);
            }
        }
        assert!(
            fit_fault_augmented(&train, 1e-2, 1.0, &[ScenarioId::Scaling], &schema(2), 3).is_ok()
        );
    }
}
