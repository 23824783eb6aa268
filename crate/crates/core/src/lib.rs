//! Sensor-fault robustness evaluation for multivariate forecasters.
//!
//! The crate injects seeded sensor-fault perturbations into standardized
//! input windows, runs any [`forecast::Forecaster`] on the clean and perturbed
//! inputs, and summarises the resulting losses with the uniform-severity Monte
//! Carlo estimator: per-scenario degradation, worst-scenario degradation and
//! fault-time error, mean-case and reference-normalized comparators, paired
//! method deltas, and percentile bootstrap intervals.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod faults;
pub mod forecast;
pub mod rng;
pub mod score;
pub mod stats;

pub use dataset::{
    ChannelSchema, Split, SplitBounds, TimeSeriesDataset, WindowSample, WindowSetting, WindowSource,
};
pub use error::{AdapterError, Error, Result};
pub use faults::{ChannelRule, ScenarioId, BENCHMARK, TRANSFER};
pub use forecast::Forecaster;
pub use score::{evaluate, EvalConfig, PairDelta, RobustnessReport};
pub use stats::Interval;
