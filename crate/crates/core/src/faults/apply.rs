use ndarray::{Array2, ArrayView2};

use super::draw::{FaultWindows, PerturbationDraw};
use super::ScenarioId;
use crate::error::{Error, Result};

/// Endpoint-clipped linear interpolation at 1-based position `tau`.
pub fn interp(x: &[f64], tau: f64) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot interpolate an empty vector".into(),
        ));
    }
    Ok(interp_unchecked(x, tau))
}

fn interp_unchecked(x: &[f64], tau: f64) -> f64 {
    let n = x.len() as f64;
    let t = tau.max(1.0).min(n);
    let a = t.floor();
    let b = t.ceil();
    let lambda = t - a;
    (1.0 - lambda) * x[a as usize - 1] + lambda * x[b as usize - 1]
}

/// Warp `len` steps of `column` starting at 1-based row `start`: output step
/// `i = 1..=len` reads the source at `start − 1 + i/ρ`. Other rows are copied.
pub fn timewarp_column(column: &[f64], start: usize, len: usize, rho: f64) -> Vec<f64> {
    assert!(
        start >= 1 && start - 1 + len <= column.len(),
        "warp window out of range"
    );
    let mut out = column.to_vec();
    for i in 1..=len {
        let tau = (start - 1) as f64 + i as f64 / rho;
        out[start + i - 2] = interp_unchecked(column, tau);
    }
    out
}

fn expect_kind(draw: &PerturbationDraw, ids: &[ScenarioId]) {
    assert!(
        ids.contains(&draw.spec.id),
        "draw for {} passed to a {:?} kernel",
        draw.spec.id,
        ids
    );
}

fn map_affected(
    x: ArrayView2<'_, f64>,
    draw: &PerturbationDraw,
    f: impl Fn(f64) -> f64,
) -> Array2<f64> {
    let mut out = x.to_owned();
    for &j in &draw.channels {
        out.column_mut(j).mapv_inplace(&f);
    }
    out
}

pub fn apply_drift(x: ArrayView2<'_, f64>, draw: &PerturbationDraw) -> Array2<f64> {
    expect_kind(draw, &[ScenarioId::Drift]);
    let theta = draw.theta;
    map_affected(x, draw, |v| v + theta)
}

pub fn apply_attenuation(x: ArrayView2<'_, f64>, draw: &PerturbationDraw) -> Array2<f64> {
    expect_kind(draw, &[ScenarioId::Attenuation]);
    let theta = draw.theta;
    map_affected(x, draw, |v| theta * v)
}

pub fn apply_noise(x: ArrayView2<'_, f64>, draw: &PerturbationDraw) -> Array2<f64> {
    expect_kind(draw, &[ScenarioId::Noise]);
    let z = draw
        .noise
        .as_ref()
        .expect("noise draw carries Gaussian matrix");
    let mut out = x.to_owned();
    for (c, &j) in draw.channels.iter().enumerate() {
        for i in 0..out.nrows() {
            out[[i, j]] += draw.theta * z[[i, c]];
        }
    }
    out
}

pub fn apply_spike(x: ArrayView2<'_, f64>, draw: &PerturbationDraw) -> Array2<f64> {
    expect_kind(draw, &[ScenarioId::Spike]);
    let FaultWindows::Steps(steps) = &draw.windows else {
        panic!("spike draw without steps");
    };
    let mut out = x.to_owned();
    for (&j, &u) in draw.channels.iter().zip(steps) {
        out[[u, j]] += draw.theta;
    }
    out
}

/// Time warp with rate `rho` on the draw's shared window.
pub fn apply_timewarp(x: ArrayView2<'_, f64>, draw: &PerturbationDraw, rho: f64) -> Array2<f64> {
    expect_kind(draw, &[ScenarioId::TimeStretch, ScenarioId::TimeCompress]);
    let FaultWindows::Shared { start, len } = draw.windows else {
        panic!("timewarp draw without shared window");
    };
    let mut out = x.to_owned();
    for &j in &draw.channels {
        let column: Vec<f64> = x.column(j).to_vec();
        let warped = timewarp_column(&column, start + 1, len, rho);
        for i in start..start + len {
            out[[i, j]] = warped[i];
        }
    }
    out
}

pub fn apply_stuck(x: ArrayView2<'_, f64>, draw: &PerturbationDraw) -> Array2<f64> {
    expect_kind(draw, &[ScenarioId::StuckSensor]);
    let FaultWindows::PerChannel(windows) = &draw.windows else {
        panic!("stuck draw without per-channel windows");
    };
    let mut out = x.to_owned();
    for (&j, &(start, len)) in draw.channels.iter().zip(windows) {
        let held = x[[start - 1, j]];
        for i in start..start + len {
            out[[i, j]] = held;
        }
    }
    out
}

pub fn apply_missing(x: ArrayView2<'_, f64>, draw: &PerturbationDraw) -> Array2<f64> {
    expect_kind(draw, &[ScenarioId::MissingData]);
    let FaultWindows::Shared { start, len } = draw.windows else {
        panic!("missing-data draw without shared gap");
    };
    let mut out = x.to_owned();
    for &j in &draw.channels {
        let held = x[[start - 1, j]];
        for i in start..start + len {
            out[[i, j]] = held;
        }
    }
    out
}

/// Dispatch on the draw's scenario.
pub fn apply_scenario(x: ArrayView2<'_, f64>, draw: &PerturbationDraw) -> Array2<f64> {
    match draw.spec.id {
        ScenarioId::Drift => apply_drift(x, draw),
        ScenarioId::Attenuation => apply_attenuation(x, draw),
        ScenarioId::Noise => apply_noise(x, draw),
        ScenarioId::Spike => apply_spike(x, draw),
        ScenarioId::TimeStretch | ScenarioId::TimeCompress => apply_timewarp(x, draw, draw.theta),
        ScenarioId::StuckSensor => apply_stuck(x, draw),
        ScenarioId::MissingData => apply_missing(x, draw),
        other => panic!("{other} is not a scored scenario"),
    }
}
