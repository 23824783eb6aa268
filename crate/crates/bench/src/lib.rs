//! Fixtures shared by the benchmarks under `benches/`.

use std::sync::Arc;

use ndarray::Array2;
use sensorfault::dataset::chronological_split;
use sensorfault::rng::Stream;
use sensorfault::{ChannelSchema, Split, TimeSeriesDataset, WindowSetting, WindowSource};

/// Daily sine plus noise on `m` continuous channels; channel 0 is the target.
pub fn daily(rows: usize, m: usize, seed: u64) -> TimeSeriesDataset {
    let mut s = Stream::from_seed(seed);
    let values = Array2::from_shape_fn((rows, m), |(i, j)| {
        (2.0 * std::f64::consts::PI * (i as f64 + 3.0 * j as f64) / 24.0).sin() + 0.1 * s.normal()
    });
    let schema =
        ChannelSchema::all_continuous((0..m).map(|j| format!("c{j}")).collect(), vec![0]).unwrap();
    TimeSeriesDataset::new(values, schema).unwrap()
}

/// Test-split windows of `daily(rows, m, seed)` under a 0.6/0.2/0.2 split.
pub fn test_source(rows: usize, m: usize, setting: WindowSetting) -> WindowSource {
    let ds = daily(rows, m, 7);
    let bounds = chronological_split(ds.rows(), [0.6, 0.2, 0.2], setting).unwrap();
    WindowSource::new(Arc::new(ds), &bounds, Split::Test, setting).unwrap()
}
