//! Training-only transfer families.
//!
//! Each family perturbs a coupled-rule subset (γ_max = 0.5) of continuous
//! channels over the whole window. With `t = i/(n−1)` for 0-based row `i`:
//!
//! | family             | effect on affected entries                                  |
//! |--------------------|-------------------------------------------------------------|
//! | LinearDrift        | `x + offset·t`, offset `s`                                  |
//! | NonlinearDrift     | `x + lin·t + quad·t²`, lin = quad = `0.5·s`                 |
//! | Scaling            | `mult·x`, mult `1 + s`                                      |
//! | TimeVaryingScaling | `(1 + (mult − 1)·t)·x`, mult `1 + s`                        |
//! | TrimmingConstant   | clamp to `[−b, b]`, b = `3 − 2s`                            |
//! | TrimmingVarying    | beyond `b`: `sign(x)·(b + damp·(|x| − b))`, damp `1 − 0.4s` |
//! | PacketLoss         | forward-filled bursts, start prob `0.25·s`, cont `0.9·s`    |
//!
//! PacketLoss (per affected channel): when `start > 0`, one burst is anchored
//! at 1-based step `max(2, floor(start·n) + 1)`. While in a burst, each next
//! step stays lost with probability `cont`; outside a burst each step opens a
//! new one with probability `start`. Lost steps repeat the last received value.

use ndarray::{Array2, ArrayView2};

use super::{channel_count, check_severity, ScenarioId};
use crate::dataset::ChannelSchema;
use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransferParams {
    LinearDrift { offset: f64 },
    NonlinearDrift { lin: f64, quad: f64 },
    Scaling { mult: f64 },
    TimeVaryingScaling { mult: f64 },
    TrimmingConstant { bound: f64 },
    TrimmingVarying { bound: f64, damp: f64 },
    PacketLoss { start: f64, cont: f64 },
}

impl TransferParams {
    pub fn at(family: ScenarioId, s: f64) -> Result<Self> {
        check_severity(s)?;
        let lerp = |a: f64, b: f64| (1.0 - s) * a + s * b;
        Ok(match family {
            ScenarioId::LinearDrift => TransferParams::LinearDrift {
                offset: lerp(0.0, 1.0),
            },
            ScenarioId::NonlinearDrift => TransferParams::NonlinearDrift {
                lin: lerp(0.0, 0.5),
                quad: lerp(0.0, 0.5),
            },
            ScenarioId::Scaling => TransferParams::Scaling {
                mult: lerp(1.0, 2.0),
            },
            ScenarioId::TimeVaryingScaling => TransferParams::TimeVaryingScaling {
                mult: lerp(1.0, 2.0),
            },
            ScenarioId::TrimmingConstant => TransferParams::TrimmingConstant {
                bound: lerp(3.0, 1.0),
            },
            ScenarioId::TrimmingVarying => TransferParams::TrimmingVarying {
                bound: lerp(3.0, 1.0),
                damp: lerp(1.0, 0.6),
            },
            ScenarioId::PacketLoss => TransferParams::PacketLoss {
                start: lerp(0.0, 0.25),
                cont: lerp(0.0, 0.9),
            },
            other => {
                return Err(Error::ProtocolViolation(format!(
                    "{other} is a scored benchmark scenario, not a transfer family"
                )))
            }
        })
    }
}

/// Apply a transfer family at severity `s`. Draw order: channel subset, then
/// PacketLoss burst decisions channel by channel.
pub fn apply_transfer(
    x: ArrayView2<'_, f64>,
    family: ScenarioId,
    s: f64,
    schema: &ChannelSchema,
    stream: &mut Stream,
) -> Result<Array2<f64>> {
    let params = TransferParams::at(family, s)?;
    let (n, m) = x.dim();
    if m != schema.len() {
        return Err(Error::ShapeMismatch {
            expected: (n, schema.len()),
            got: (n, m),
        });
    }
    let pool = schema.continuous_indices();
    let k = channel_count(s, pool.len(), 0.5)?;
    let channels = stream.choose_without_replacement(&pool, k);

    let ramp = |i: usize| {
        if n > 1 {
            i as f64 / (n - 1) as f64
        } else {
            0.0
        }
    };
    let mut out = x.to_owned();
    for &j in &channels {
        let mut col = out.column_mut(j);
        match params {
            TransferParams::LinearDrift { offset } => {
                for (i, v) in col.iter_mut().enumerate() {
                    *v += offset * ramp(i);
                }
            }
            TransferParams::NonlinearDrift { lin, quad } => {
                for (i, v) in col.iter_mut().enumerate() {
                    let t = ramp(i);
                    *v += lin * t + quad * t * t;
                }
            }
            TransferParams::Scaling { mult } => col.mapv_inplace(|v| mult * v),
            TransferParams::TimeVaryingScaling { mult } => {
                for (i, v) in col.iter_mut().enumerate() {
                    *v *= 1.0 + (mult - 1.0) * ramp(i);
                }
            }
            TransferParams::TrimmingConstant { bound } => {
                col.mapv_inplace(|v| v.clamp(-bound, bound))
            }
            TransferParams::TrimmingVarying { bound, damp } => col.mapv_inplace(|v| {
                if v.abs() > bound {
                    v.signum() * (bound + damp * (v.abs() - bound))
                } else {
                    v
                }
            }),
            TransferParams::PacketLoss { start, cont } => {
                let lost = packet_loss_mask(n, start, cont, stream);
                for i in 1..n {
                    if lost[i] {
                        col[i] = col[i - 1];
                    }
                }
            }
        }
    }
    Ok(out)
}

fn packet_loss_mask(n: usize, start: f64, cont: f64, stream: &mut Stream) -> Vec<bool> {
    let mut lost = vec![false; n];
    if start <= 0.0 || n < 2 {
        return lost;
    }
    // 1-based anchor max(2, floor(start·n)+1), stored 0-based
    let anchor = ((start * n as f64).floor() as usize).max(1).min(n - 1);
    lost[anchor] = true;
    let mut in_burst = true;
    for slot in lost.iter_mut().skip(anchor + 1) {
        in_burst = if in_burst {
            stream.bernoulli(cont)
        } else {
            stream.bernoulli(start)
        };
        *slot = in_burst;
    }
    lost
}
