#![allow(dead_code)]

use std::sync::Arc;

use ndarray::Array2;
use sensorfault::dataset::{chronological_split, Split, SplitBounds};
use sensorfault::rng::Stream;
use sensorfault::{ChannelSchema, TimeSeriesDataset, WindowSetting, WindowSource};

pub fn schema(m: usize, targets: Vec<usize>) -> ChannelSchema {
    ChannelSchema::all_continuous((0..m).map(|j| format!("c{j}")).collect(), targets).unwrap()
}

/// i.i.d. standard normal rows.
pub fn white_noise(rows: usize, m: usize, seed: u64) -> TimeSeriesDataset {
    let mut s = Stream::from_seed(seed);
    let values = Array2::from_shape_simple_fn((rows, m), || s.normal());
    TimeSeriesDataset::new(values, schema(m, vec![0])).unwrap()
}

/// Daily sine plus small noise on every channel.
pub fn daily(rows: usize, m: usize, seed: u64) -> TimeSeriesDataset {
    let mut s = Stream::from_seed(seed);
    let values = Array2::from_shape_fn((rows, m), |(i, j)| {
        (2.0 * std::f64::consts::PI * (i as f64 + 3.0 * j as f64) / 24.0).sin() + 0.1 * s.normal()
    });
    TimeSeriesDataset::new(values, schema(m, vec![0])).unwrap()
}

/// Independent Gaussian random walks.
pub fn random_walk(rows: usize, m: usize, seed: u64) -> TimeSeriesDataset {
    let mut s = Stream::from_seed(seed);
    let mut values = Array2::zeros((rows, m));
    for i in 1..rows {
        for j in 0..m {
            values[[i, j]] = values[[i - 1, j]] + s.normal();
        }
    }
    TimeSeriesDataset::new(values, schema(m, vec![0])).unwrap()
}

pub fn source(
    ds: TimeSeriesDataset,
    split: Split,
    setting: WindowSetting,
) -> (WindowSource, SplitBounds) {
    let bounds = chronological_split(ds.rows(), [0.6, 0.2, 0.2], setting).unwrap();
    (
        WindowSource::new(Arc::new(ds), &bounds, split, setting).unwrap(),
        bounds,
    )
}

pub fn stub() -> &'static str {
    env!("CARGO_BIN_EXE_sensorfault-stub")
}
