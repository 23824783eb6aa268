use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ChannelRule, ScenarioSpec, Scope, WindowRule};
use crate::dataset::ChannelSchema;
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Time steps touched by one draw. Starts are 0-based row indices and are
/// always at least 1, so the preceding row exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FaultWindows {
    /// Every row of each affected channel.
    Full,
    /// One step per affected channel, aligned with `channels`.
    Steps(Vec<usize>),
    /// One interval shared by all affected channels.
    Shared { start: usize, len: usize },
    /// One interval per affected channel, aligned with `channels`.
    PerChannel(Vec<(usize, usize)>),
}

/// One realized perturbation: severity, parameter, affected channels and
/// time steps, and auxiliary noise.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationDraw {
    pub spec: ScenarioSpec,
    pub severity: f64,
    pub theta: f64,
    /// Affected channels in draw order; every channel for all-channel scope.
    pub channels: Vec<usize>,
    pub windows: FaultWindows,
    /// Gaussian draws, `n × channels.len()`, for Noise only.
    pub noise: Option<Array2<f64>>,
}

impl PerturbationDraw {
    /// Entries that the draw is allowed to modify.
    pub fn affected_mask(&self, n: usize, m: usize) -> Array2<bool> {
        let mut mask = Array2::from_elem((n, m), false);
        for (c, &j) in self.channels.iter().enumerate() {
            let rows = match &self.windows {
                FaultWindows::Full => 0..n,
                FaultWindows::Steps(steps) => steps[c]..steps[c] + 1,
                FaultWindows::Shared { start, len } => *start..start + len,
                FaultWindows::PerChannel(w) => w[c].0..w[c].0 + w[c].1,
            };
            for i in rows {
                mask[[i, j]] = true;
            }
        }
        mask
    }
}

/// Length `ceil(θ·(n−1))` of an availability window.
fn fraction_len(theta: f64, n: usize) -> usize {
    (theta * (n - 1) as f64).ceil() as usize
}

/// Uniform start in 1-based `{2, …, n−l+1}`, returned 0-based.
fn window_start(stream: &mut Stream, n: usize, len: usize) -> usize {
    assert!(
        len < n,
        "window of length {len} does not fit after the first of {n} steps"
    );
    stream.range_inclusive(1, n - len)
}

/// Realize a scenario at severity `s` for an `n`-step window.
///
/// Draw order from `stream`: channel subset, then time windows, then Gaussian
/// noise row by row.
pub fn draw_perturbation(
    spec: &ScenarioSpec,
    rule: &ChannelRule,
    s: f64,
    n: usize,
    schema: &ChannelSchema,
    stream: &mut Stream,
) -> Result<PerturbationDraw> {
    let theta = spec.severity_map(s)?;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("window length {n} < 2")));
    }

    let channels = match spec.scope {
        Scope::ContinuousSubset => {
            let pool = schema.continuous_indices();
            if pool.is_empty() {
                return Err(Error::Schema("no continuous channels to perturb".into()));
            }
            let k = rule.count(s, pool.len())?;
            stream.choose_without_replacement(&pool, k.min(pool.len()))
        }
        Scope::AllChannels => (0..schema.len()).collect(),
    };

    let windows = match spec.window_rule {
        WindowRule::FullWindow => FaultWindows::Full,
        WindowRule::SingleStep => FaultWindows::Steps(
            channels
                .iter()
                .map(|_| stream.range_inclusive(1, n - 1))
                .collect(),
        ),
        WindowRule::SharedFixedHalf => {
            let len = n.div_ceil(2);
            FaultWindows::Shared {
                start: window_start(stream, n, len),
                len,
            }
        }
        WindowRule::PerChannelFraction => {
            let len = fraction_len(theta, n);
            FaultWindows::PerChannel(
                channels
                    .iter()
                    .map(|_| (window_start(stream, n, len), len))
                    .collect(),
            )
        }
        WindowRule::SharedFraction => {
            let len = fraction_len(theta, n);
            FaultWindows::Shared {
                start: window_start(stream, n, len),
                len,
            }
        }
    };

    let noise = (spec.id == super::ScenarioId::Noise)
        .then(|| Array2::from_shape_simple_fn((n, channels.len()), || stream.normal()));

    Ok(PerturbationDraw {
        spec: *spec,
        severity: s,
        theta,
        channels,
        windows,
        noise,
    })
}
