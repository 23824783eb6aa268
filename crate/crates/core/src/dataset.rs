//! CSV ingestion, chronological splits, train-only standardization and
//! window enumeration/sampling.
//!
//! Row and window indices are 0-based internally. A window starting at row
//! `I` reads input rows `I..I+n` and target rows `I+n..I+n+n'`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSchema {
    names: Vec<String>,
    continuous: Vec<bool>,
    targets: Vec<usize>,
}

impl ChannelSchema {
    pub fn new(names: Vec<String>, continuous: Vec<bool>, targets: Vec<usize>) -> Result<Self> {
        let m = names.len();
        if m == 0 {
            return Err(Error::Schema("no channels".into()));
        }
        if continuous.len() != m {
            return Err(Error::Schema(format!(
                "{} continuous flags for {m} channels",
                continuous.len()
            )));
        }
        if !continuous.iter().any(|&c| c) {
            return Err(Error::Schema(
                "at least one channel must be continuous".into(),
            ));
        }
        if targets.is_empty() {
            return Err(Error::Schema("target set is empty".into()));
        }
        let mut seen = vec![false; m];
        for &t in &targets {
            if t >= m {
                return Err(Error::Schema(format!(
                    "target index {t} out of range for {m} channels"
                )));
            }
            if std::mem::replace(&mut seen[t], true) {
                return Err(Error::Schema(format!("target index {t} listed twice")));
            }
        }
        Ok(Self {
            names,
            continuous,
            targets,
        })
    }

    /// All channels continuous, given targets.
    pub fn all_continuous(names: Vec<String>, targets: Vec<usize>) -> Result<Self> {
        let continuous = vec![true; names.len()];
        Self::new(names, continuous, targets)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn is_continuous(&self, channel: usize) -> bool {
        self.continuous[channel]
    }

    pub fn continuous_mask(&self) -> &[bool] {
        &self.continuous
    }

    pub fn continuous_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.continuous[j]).collect()
    }

    pub fn m_cont(&self) -> usize {
        self.continuous.iter().filter(|&&c| c).count()
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }
}

/// Input length `n` and forecast horizon `n'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSetting {
    pub input: usize,
    pub horizon: usize,
}

impl WindowSetting {
    pub fn new(input: usize, horizon: usize) -> Result<Self> {
        if input < 2 || horizon < 1 {
            return Err(Error::InvalidArgument(format!(
                "window setting needs n >= 2 and n' >= 1, got n={input}, n'={horizon}"
            )));
        }
        Ok(Self { input, horizon })
    }

    pub fn span(&self) -> usize {
        self.input + self.horizon
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    values: Array2<f64>,
    schema: ChannelSchema,
}

impl TimeSeriesDataset {
    pub fn new(values: Array2<f64>, schema: ChannelSchema) -> Result<Self> {
        if values.ncols() != schema.len() {
            return Err(Error::ShapeMismatch {
                expected: (values.nrows(), schema.len()),
                got: values.dim(),
            });
        }
        if let Some(((i, j), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::BadCell {
                row: i + 1,
                column: schema.names()[j].clone(),
                reason: "non-finite value".into(),
            });
        }
        Ok(Self { values, schema })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn schema(&self) -> &ChannelSchema {
        &self.schema
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    /// Input and target matrices for the window starting at `start`.
    pub fn window(&self, start: usize, setting: WindowSetting) -> WindowSample {
        let n = setting.input;
        let x = self
            .values
            .slice(ndarray::s![start..start + n, ..])
            .to_owned();
        let future = self
            .values
            .slice(ndarray::s![start + n..start + setting.span(), ..]);
        let y = future.select(Axis(1), self.schema.targets());
        WindowSample { x, y, start }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Drop the first CSV column (a timestamp string) before parsing.
    pub timestamp_column: bool,
    /// Reject files with fewer data rows than this.
    pub min_rows: usize,
}

/// Load a CSV whose header (after the optional timestamp column) names the
/// schema's channels in order. Reported row numbers are 1-based data rows.
pub fn load_csv(
    path: impl AsRef<Path>,
    schema: &ChannelSchema,
    opts: &LoadOptions,
) -> Result<TimeSeriesDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(std::io::BufReader::new(file));

    let skip = usize::from(opts.timestamp_column);
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .skip(skip)
        .map(|h| h.trim().to_string())
        .collect();
    if header != schema.names() {
        return Err(Error::HeaderMismatch {
            expected: schema.names().to_vec(),
            found: header,
        });
    }

    let m = schema.len();
    let mut cells = Vec::new();
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record?;
        rows += 1;
        for (j, field) in record.iter().skip(skip).enumerate() {
            let field = field.trim();
            let column = schema.names()[j].clone();
            if field.is_empty() {
                return Err(Error::BadCell {
                    row: rows,
                    column,
                    reason: "empty cell".into(),
                });
            }
            let v: f64 = field.parse().map_err(|_| Error::BadCell {
                row: rows,
                column: column.clone(),
                reason: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::BadCell {
                    row: rows,
                    column,
                    reason: "non-finite value".into(),
                });
            }
            cells.push(v);
        }
    }
    if rows < opts.min_rows.max(1) {
        return Err(Error::InvalidArgument(format!(
            "{} has {rows} data rows, need at least {}",
            path.display(),
            opts.min_rows.max(1)
        )));
    }
    let values = Array2::from_shape_vec((rows, m), cells).expect("row width checked by csv reader");
    TimeSeriesDataset::new(values, schema.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "validation",
            Split::Test => "test",
        })
    }
}

/// Row boundaries: train is `[0, train_end)`, validation `[train_end, val_end)`,
/// test `[val_end, rows)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBounds {
    pub train_end: usize,
    pub val_end: usize,
    pub rows: usize,
}

impl SplitBounds {
    pub fn range(&self, split: Split) -> std::ops::Range<usize> {
        match split {
            Split::Train => 0..self.train_end,
            Split::Val => self.train_end..self.val_end,
            Split::Test => self.val_end..self.rows,
        }
    }
}

/// Cut `rows` at `floor(train·N)` and `floor((train+val)·N)`.
pub fn chronological_split(
    rows: usize,
    fractions: [f64; 3],
    setting: WindowSetting,
) -> Result<SplitBounds> {
    if fractions.iter().any(|&f| !(f > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be positive, got {fractions:?}"
        )));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions sum to {total}, expected 1"
        )));
    }
    let n = rows as f64;
    // The small guard keeps products like 0.7·N = 69.99999… on the intended row.
    let cut = |f: f64| ((f * n) + 1e-9).floor() as usize;
    let bounds = SplitBounds {
        train_end: cut(fractions[0]),
        val_end: cut(fractions[0] + fractions[1]).min(rows),
        rows,
    };
    for split in [Split::Train, Split::Val, Split::Test] {
        let len = bounds.range(split).len();
        if len < setting.span() {
            return Err(Error::SplitTooShort {
                split: match split {
                    Split::Train => "train",
                    Split::Val => "validation",
                    Split::Test => "test",
                },
                available: len,
                needed: setting.span(),
            });
        }
    }
    Ok(bounds)
}

/// Per-channel train statistics (population standard deviation; zero-variance
/// channels get std 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    targets: Vec<usize>,
}

impl StandardizationStats {
    pub fn target_mean(&self) -> Vec<f64> {
        self.targets.iter().map(|&t| self.mean[t]).collect()
    }

    pub fn target_std(&self) -> Vec<f64> {
        self.targets.iter().map(|&t| self.std[t]).collect()
    }

    pub fn apply(&self, ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
        self.check_dim(ds)?;
        let mut values = ds.values().clone();
        for (j, mut col) in values.axis_iter_mut(Axis(1)).enumerate() {
            let (mu, sd) = (self.mean[j], self.std[j]);
            col.mapv_inplace(|v| (v - mu) / sd);
        }
        TimeSeriesDataset::new(values, ds.schema().clone())
    }

    pub fn invert(&self, ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
        self.check_dim(ds)?;
        let mut values = ds.values().clone();
        for (j, mut col) in values.axis_iter_mut(Axis(1)).enumerate() {
            let (mu, sd) = (self.mean[j], self.std[j]);
            col.mapv_inplace(|v| v * sd + mu);
        }
        TimeSeriesDataset::new(values, ds.schema().clone())
    }

    fn check_dim(&self, ds: &TimeSeriesDataset) -> Result<()> {
        if ds.channels() != self.mean.len() {
            return Err(Error::ShapeMismatch {
                expected: (ds.rows(), self.mean.len()),
                got: (ds.rows(), ds.channels()),
            });
        }
        Ok(())
    }
}

pub fn fit_standardizer(
    ds: &TimeSeriesDataset,
    bounds: &SplitBounds,
) -> Result<StandardizationStats> {
    let train = ds
        .values()
        .slice(ndarray::s![0..bounds.train_end.min(ds.rows()), ..]);
    if train.nrows() == 0 {
        return Err(Error::InvalidArgument("train segment is empty".into()));
    }
    let count = train.nrows() as f64;
    let mut mean = Vec::with_capacity(ds.channels());
    let mut std = Vec::with_capacity(ds.channels());
    for col in train.axis_iter(Axis(1)) {
        // sequential sums in row order
        let mu = col.iter().fold(0.0, |acc, &v| acc + v) / count;
        let var = col.iter().fold(0.0, |acc, &v| acc + (v - mu) * (v - mu)) / count;
        let sd = var.sqrt();
        mean.push(mu);
        std.push(if sd > 0.0 { sd } else { 1.0 });
    }
    Ok(StandardizationStats {
        mean,
        std,
        targets: ds.schema().targets().to_vec(),
    })
}

/// Start indices `0..=N-n-n'` over the whole series.
pub fn whole_series_windows(rows: usize, setting: WindowSetting) -> Vec<usize> {
    if rows < setting.span() {
        return Vec::new();
    }
    (0..=rows - setting.span()).collect()
}

/// Starts whose input and target rows all lie inside `split`.
pub fn enumerate_windows(
    bounds: &SplitBounds,
    split: Split,
    setting: WindowSetting,
) -> Result<Vec<usize>> {
    let range = bounds.range(split);
    if range.len() < setting.span() {
        return Err(Error::EmptyIndexSet(format!(
            "{split} split has {} rows, a window needs {}",
            range.len(),
            setting.span()
        )));
    }
    Ok((range.start..=range.end - setting.span()).collect())
}

/// `k` draws uniformly with replacement from `starts`.
pub fn sample_starts(starts: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    if starts.is_empty() {
        return Err(Error::EmptyIndexSet(
            "cannot sample from an empty index set".into(),
        ));
    }
    if k == 0 {
        return Err(Error::InvalidArgument(
            "window budget K must be at least 1".into(),
        ));
    }
    let mut stream = Stream::keyed(seed, &[crate::rng::tag::WINDOWS]);
    let len = starts.len() as u64;
    Ok((0..k).map(|_| starts[stream.below(len) as usize]).collect())
}

pub fn sample_windows(
    ds: &TimeSeriesDataset,
    starts: &[usize],
    setting: WindowSetting,
    k: usize,
    seed: u64,
) -> Result<Vec<WindowSample>> {
    Ok(sample_starts(starts, k, seed)?
        .into_iter()
        .map(|s| ds.window(s, setting))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    /// `n × m` standardized input.
    pub x: Array2<f64>,
    /// `n' × m_tgt` standardized targets.
    pub y: Array2<f64>,
    pub start: usize,
}

/// A standardized dataset plus the eligible window starts of one split.
#[derive(Debug, Clone)]
pub struct WindowSource {
    data: Arc<TimeSeriesDataset>,
    setting: WindowSetting,
    split: Split,
    starts: Vec<usize>,
}

impl WindowSource {
    pub fn new(
        data: Arc<TimeSeriesDataset>,
        bounds: &SplitBounds,
        split: Split,
        setting: WindowSetting,
    ) -> Result<Self> {
        let starts = enumerate_windows(bounds, split, setting)?;
        Ok(Self {
            data,
            setting,
            split,
            starts,
        })
    }

    /// Source over explicit starts, e.g. for synthetic experiments.
    pub fn from_starts(
        data: Arc<TimeSeriesDataset>,
        setting: WindowSetting,
        split: Split,
        starts: Vec<usize>,
    ) -> Result<Self> {
        if starts.is_empty() {
            return Err(Error::EmptyIndexSet(format!(
                "{split} source has no starts"
            )));
        }
        if let Some(&bad) = starts.iter().find(|&&s| s + setting.span() > data.rows()) {
            return Err(Error::InvalidArgument(format!(
                "window start {bad} overruns {} rows",
                data.rows()
            )));
        }
        Ok(Self {
            data,
            setting,
            split,
            starts,
        })
    }

    pub fn data(&self) -> &TimeSeriesDataset {
        &self.data
    }

    pub fn setting(&self) -> WindowSetting {
        self.setting
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn window(&self, start: usize) -> WindowSample {
        self.data.window(start, self.setting)
    }

    pub fn sample(&self, k: usize, seed: u64) -> Result<Vec<usize>> {
        sample_starts(&self.starts, k, seed)
    }

    /// At most `cap` starts: all of them if they fit, otherwise a seeded
    /// draw with replacement.
    pub fn capped_starts(&self, cap: usize, seed: u64) -> Result<Vec<usize>> {
        if cap == 0 || self.starts.len() <= cap {
            Ok(self.starts.clone())
        } else {
            self.sample(cap, seed)
        }
    }
}
