//! Uniform-severity Monte Carlo estimation and the scores derived from it.
//!
//! [`evaluate`] samples `K` test windows once, computes each window's clean
//! loss once, and for every scenario and window draws a fresh severity and
//! fault realization from a substream keyed by `(eval_seed, scenario, k)`.
//! Work is split into fixed chunks of windows and merged in window order, so
//! reports do not depend on the worker count.

mod compare;
mod report;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ndarray::ArrayView2;

use crate::dataset::{WindowSample, WindowSource};
use crate::error::{Error, Result};
use crate::faults::{
    apply_scenario, benchmark_order, draw_perturbation, ChannelRule, ScenarioId, ScenarioSpec,
    BENCHMARK,
};
use crate::forecast::Forecaster;
use crate::rng::{derive_key, mix64, tag, Stream};
use crate::stats::{bootstrap_windows, Statistic};

pub use compare::{
    effective_robustness, paired_deltas, reference_normalized, EffectiveRobustness, PairDelta,
    ReferenceNormalized,
};
pub use report::{
    degradation, mean_case, worst_scenario, EvalEcho, MeanCase, RobustnessReport, ScenarioScore,
    Summary, WindowLosses, WorstCase, REPORT_SCHEMA_VERSION,
};

/// Windows handed to the forecaster per batch.
const CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Window budget `K`.
    pub k: usize,
    pub eval_seed: u64,
    pub scenarios: Vec<ScenarioId>,
    pub channel_rule: ChannelRule,
    /// Bootstrap replicates `B`; zero disables intervals.
    pub bootstrap: usize,
    pub level: f64,
    /// Thread count; zero uses the global pool. Not part of the report.
    #[serde(skip)]
    pub workers: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 10_000,
            eval_seed: derive_key(42, &[tag::EVAL]),
            scenarios: BENCHMARK.to_vec(),
            channel_rule: ChannelRule::default(),
            bootstrap: 1000,
            level: 0.95,
            workers: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument(
                "window budget K must be at least 1".into(),
            ));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "interval level {} outside (0, 1)",
                self.level
            )));
        }
        self.channel_rule.validate()?;
        benchmark_order(&self.scenarios).map(|_| ())
    }
}

/// Mean squared error over the `n' × m_tgt` target block.
pub fn mse_target(yhat: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
    if yhat.dim() != y.dim() {
        return Err(Error::ShapeMismatch {
            expected: y.dim(),
            got: yhat.dim(),
        });
    }
    let sum = yhat
        .iter()
        .zip(y.iter())
        .fold(0.0, |acc, (a, b)| acc + (a - b) * (a - b));
    Ok(sum / y.len() as f64)
}

pub(crate) fn sequential_mean(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |a, &v| a + v) / xs.len() as f64
}

fn in_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(job))
}

fn forecast_error(window: usize, scenario: Option<ScenarioId>, source: Error) -> Error {
    Error::Forecast {
        window,
        scenario,
        source: Box::new(source),
    }
}

fn loss(pred: &ndarray::Array2<f64>, y: &ndarray::Array2<f64>) -> Result<f64> {
    let l = mse_target(pred.view(), y.view())?;
    if !l.is_finite() {
        return Err(Error::InvalidArgument("prediction is not finite".into()));
    }
    Ok(l)
}

/// Mean clean MSE of `f` over the given window starts.
pub fn clean_mse(
    f: &dyn Forecaster,
    source: &WindowSource,
    starts: &[usize],
    workers: usize,
) -> Result<f64> {
    if starts.is_empty() {
        return Err(Error::EmptyIndexSet(format!(
            "no {} windows to score",
            source.split()
        )));
    }
    let losses = in_pool(workers, || {
        starts
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(c, chunk)| {
                let windows: Vec<WindowSample> = chunk.iter().map(|&s| source.window(s)).collect();
                let xs: Vec<_> = windows.iter().map(|w| w.x.clone()).collect();
                let preds = f
                    .predict_batch(&xs)
                    .map_err(|e| forecast_error(c * CHUNK, None, e))?;
                windows
                    .iter()
                    .zip(&preds)
                    .enumerate()
                    .map(|(i, (w, p))| {
                        loss(p, &w.y).map_err(|e| forecast_error(c * CHUNK + i, None, e))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<Vec<f64>>>>()
    })??;
    Ok(sequential_mean(&losses.concat()))
}

/// Order-sensitive digest of a dataset's values and shape.
pub fn dataset_fingerprint(source: &WindowSource) -> String {
    let values = source.data().values();
    let (r, c) = values.dim();
    let h = values
        .iter()
        .fold(mix64((r as u64) << 32 ^ c as u64), |h, v| {
            mix64(h ^ v.to_bits())
        });
    format!("{h:016x}")
}

struct ChunkLosses {
    clean: Vec<f64>,
    perturbed: Vec<Vec<f64>>,
}

fn eval_chunk(
    f: &dyn Forecaster,
    source: &WindowSource,
    specs: &[(usize, ScenarioSpec)],
    cfg: &EvalConfig,
    first: usize,
    chunk: &[usize],
) -> Result<ChunkLosses> {
    let n = source.setting().input;
    let schema = source.data().schema();
    let per_window = 1 + specs.len();
    let windows: Vec<WindowSample> = chunk.iter().map(|&s| source.window(s)).collect();

    let mut inputs = Vec::with_capacity(windows.len() * per_window);
    for (i, w) in windows.iter().enumerate() {
        let k = (first + i) as u64;
        inputs.push(w.x.clone());
        for (ordinal, spec) in specs {
            let mut stream = Stream::keyed(cfg.eval_seed, &[tag::SCENARIO, *ordinal as u64, k]);
            let s = stream.uniform();
            let draw = draw_perturbation(spec, &cfg.channel_rule, s, n, schema, &mut stream)
                .map_err(|e| forecast_error(first + i, Some(spec.id), e))?;
            inputs.push(apply_scenario(w.x.view(), &draw));
        }
    }

    let preds = f
        .predict_batch(&inputs)
        .map_err(|e| forecast_error(first, None, e))?;
    if preds.len() != inputs.len() {
        return Err(forecast_error(
            first,
            None,
            Error::InvalidArgument(format!(
                "{} predictions for {} inputs",
                preds.len(),
                inputs.len()
            )),
        ));
    }

    let mut out = ChunkLosses {
        clean: Vec::with_capacity(windows.len()),
        perturbed: vec![Vec::with_capacity(windows.len()); specs.len()],
    };
    for (i, w) in windows.iter().enumerate() {
        let row = &preds[i * per_window..(i + 1) * per_window];
        out.clean
            .push(loss(&row[0], &w.y).map_err(|e| forecast_error(first + i, None, e))?);
        for (p, (_, spec)) in specs.iter().enumerate() {
            out.perturbed[p].push(
                loss(&row[1 + p], &w.y).map_err(|e| forecast_error(first + i, Some(spec.id), e))?,
            );
        }
    }
    Ok(out)
}

/// Run the uniform-severity Monte Carlo estimator of `f` on `source`.
///
/// A zero clean MSE leaves the degradation fields empty; raw MSEs are still
/// reported and [`RobustnessReport::require_degradation`] returns
/// [`Error::DegradationUndefined`].
pub fn evaluate(
    f: &dyn Forecaster,
    source: &WindowSource,
    cfg: &EvalConfig,
) -> Result<RobustnessReport> {
    cfg.validate()?;
    let scenarios = benchmark_order(&cfg.scenarios)?;
    let specs: Vec<(usize, ScenarioSpec)> = scenarios
        .iter()
        .map(|&id| {
            let ordinal = id.benchmark_ordinal().expect("benchmark scenario");
            (
                ordinal,
                ScenarioSpec::benchmark(id).expect("benchmark scenario"),
            )
        })
        .collect();
    let starts = source.sample(cfg.k, cfg.eval_seed)?;

    let chunks = in_pool(cfg.workers, || {
        starts
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(c, chunk)| eval_chunk(f, source, &specs, cfg, c * CHUNK, chunk))
            .collect::<Result<Vec<_>>>()
    })??;

    let mut clean = Vec::with_capacity(starts.len());
    let mut perturbed = vec![Vec::with_capacity(starts.len()); specs.len()];
    for c in chunks {
        clean.extend(c.clean);
        for (dst, src) in perturbed.iter_mut().zip(c.perturbed) {
            dst.extend(src);
        }
    }

    let echo = EvalEcho {
        k: cfg.k,
        eval_seed: cfg.eval_seed,
        scenarios: scenarios.clone(),
        channel_rule: cfg.channel_rule,
        bootstrap: cfg.bootstrap,
        level: cfg.level,
        input: source.setting().input,
        horizon: source.setting().horizon,
        split: source.split().to_string(),
        eligible_windows: source.starts().len(),
        dataset: dataset_fingerprint(source),
    };
    let windows = WindowLosses {
        starts,
        clean,
        perturbed,
    };
    let mut report = RobustnessReport::from_losses(f.id().to_string(), echo, scenarios, windows);

    if cfg.bootstrap > 0 && report.worst.is_some() {
        report.intervals = bootstrap_windows(
            &report,
            cfg.bootstrap,
            derive_key(cfg.eval_seed, &[tag::BOOTSTRAP]),
            cfg.level,
            &Statistic::ALL,
        )?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn mse_examples() {
        let y = array![[1.0], [2.0]];
        assert_eq!(mse_target(y.view(), y.view()).unwrap(), 0.0);
        assert_eq!(
            mse_target(array![[2.0], [1.0]].view(), y.view()).unwrap(),
            1.0
        );
        let ones = ndarray::Array2::ones((6, 1));
        assert_eq!(
            mse_target(ndarray::Array2::zeros((6, 1)).view(), ones.view()).unwrap(),
            1.0
        );
        assert!(mse_target(array![[1.0]].view(), y.view()).is_err());
    }

    #[test]
    fn config_rejects_transfer_families_and_zero_budget() {
        let mut cfg = EvalConfig {
            scenarios: vec![ScenarioId::PacketLoss],
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::ProtocolViolation(_))));
        cfg.scenarios = BENCHMARK.to_vec();
        cfg.k = 0;
        assert!(cfg.validate().is_err());
    }
}
