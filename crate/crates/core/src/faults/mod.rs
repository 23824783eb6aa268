//! Sensor-fault scenarios applied to standardized input windows.
//!
//! The scored benchmark set has a fixed order (used for tie-breaking and
//! report layout); the transfer families are training-only and can never be
//! scored. All transformations read and write the input window only.

mod apply;
mod draw;
mod transfer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use apply::{
    apply_attenuation, apply_drift, apply_missing, apply_noise, apply_scenario, apply_spike,
    apply_stuck, apply_timewarp, interp, timewarp_column,
};
pub use draw::{draw_perturbation, FaultWindows, PerturbationDraw};
pub use transfer::{apply_transfer, TransferParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioId {
    Drift,
    Attenuation,
    Noise,
    Spike,
    TimeStretch,
    TimeCompress,
    StuckSensor,
    MissingData,
    LinearDrift,
    NonlinearDrift,
    Scaling,
    TimeVaryingScaling,
    TrimmingConstant,
    TrimmingVarying,
    PacketLoss,
}

/// Scored scenarios in fixed benchmark order.
pub const BENCHMARK: [ScenarioId; 8] = [
    ScenarioId::Drift,
    ScenarioId::Attenuation,
    ScenarioId::Noise,
    ScenarioId::Spike,
    ScenarioId::TimeStretch,
    ScenarioId::TimeCompress,
    ScenarioId::StuckSensor,
    ScenarioId::MissingData,
];

/// Training-only transfer families.
pub const TRANSFER: [ScenarioId; 7] = [
    ScenarioId::LinearDrift,
    ScenarioId::NonlinearDrift,
    ScenarioId::Scaling,
    ScenarioId::TimeVaryingScaling,
    ScenarioId::TrimmingConstant,
    ScenarioId::TrimmingVarying,
    ScenarioId::PacketLoss,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioClass {
    Value,
    Timing,
    Availability,
}

impl ScenarioId {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::Drift => "Drift",
            ScenarioId::Attenuation => "Attenuation",
            ScenarioId::Noise => "Noise",
            ScenarioId::Spike => "Spike",
            ScenarioId::TimeStretch => "TimeStretch",
            ScenarioId::TimeCompress => "TimeCompress",
            ScenarioId::StuckSensor => "StuckSensor",
            ScenarioId::MissingData => "MissingData",
            ScenarioId::LinearDrift => "LinearDrift",
            ScenarioId::NonlinearDrift => "NonlinearDrift",
            ScenarioId::Scaling => "Scaling",
            ScenarioId::TimeVaryingScaling => "TimeVaryingScaling",
            ScenarioId::TrimmingConstant => "TrimmingConstant",
            ScenarioId::TrimmingVarying => "TrimmingVarying",
            ScenarioId::PacketLoss => "PacketLoss",
        }
    }

    pub fn is_benchmark(self) -> bool {
        BENCHMARK.contains(&self)
    }

    /// Position in the fixed benchmark order, `None` for transfer families.
    pub fn benchmark_ordinal(self) -> Option<usize> {
        BENCHMARK.iter().position(|&p| p == self)
    }

    /// Class of a scored scenario. Transfer families map onto the class of
    /// the fault group they belong to.
    pub fn class(self) -> ScenarioClass {
        use ScenarioId::*;
        match self {
            Drift | Attenuation | Noise | Spike => ScenarioClass::Value,
            LinearDrift | NonlinearDrift | Scaling | TimeVaryingScaling | TrimmingConstant
            | TrimmingVarying => ScenarioClass::Value,
            TimeStretch | TimeCompress => ScenarioClass::Timing,
            StuckSensor | MissingData | PacketLoss => ScenarioClass::Availability,
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BENCHMARK
            .iter()
            .chain(TRANSFER.iter())
            .copied()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scenario {s:?}")))
    }
}

/// Sort a scenario list into benchmark order, rejecting duplicates and
/// transfer families.
pub fn benchmark_order(scenarios: &[ScenarioId]) -> Result<Vec<ScenarioId>> {
    if scenarios.is_empty() {
        return Err(Error::InvalidArgument("scenario set is empty".into()));
    }
    if let Some(t) = scenarios.iter().find(|s| !s.is_benchmark()) {
        return Err(Error::ProtocolViolation(format!(
            "{t} is a training-only transfer family and cannot be scored"
        )));
    }
    let ordered: Vec<ScenarioId> = BENCHMARK
        .iter()
        .copied()
        .filter(|p| scenarios.contains(p))
        .collect();
    if ordered.len() != scenarios.len() {
        return Err(Error::InvalidArgument("duplicate scenario in set".into()));
    }
    Ok(ordered)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scope {
    ContinuousSubset,
    AllChannels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowRule {
    FullWindow,
    SingleStep,
    SharedFixedHalf,
    PerChannelFraction,
    SharedFraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub theta_min: f64,
    pub theta_max: f64,
    pub scope: Scope,
    pub window_rule: WindowRule,
}

impl ScenarioSpec {
    /// Protocol constants for a scored scenario; `None` for transfer families.
    pub fn benchmark(id: ScenarioId) -> Option<Self> {
        use ScenarioId::*;
        use Scope::*;
        use WindowRule::*;
        let (theta_min, theta_max, scope, window_rule) = match id {
            Drift => (0.0, 0.75, ContinuousSubset, FullWindow),
            Attenuation => (1.0, 0.25, ContinuousSubset, FullWindow),
            Noise => (0.0, 1.0, ContinuousSubset, FullWindow),
            Spike => (0.0, 7.5, ContinuousSubset, SingleStep),
            TimeStretch => (1.0, 5.0, ContinuousSubset, SharedFixedHalf),
            TimeCompress => (1.0, 0.1, ContinuousSubset, SharedFixedHalf),
            StuckSensor => (0.0, 1.0, ContinuousSubset, PerChannelFraction),
            MissingData => (0.0, 0.5, AllChannels, SharedFraction),
            _ => return None,
        };
        Some(Self {
            id,
            theta_min,
            theta_max,
            scope,
            window_rule,
        })
    }

    /// `θ(s) = θ_min + s·(θ_max − θ_min)`, evaluated as `(1−s)·θ_min + s·θ_max`
    /// so both endpoints are exact.
    pub fn severity_map(&self, s: f64) -> Result<f64> {
        check_severity(s)?;
        Ok((1.0 - s) * self.theta_min + s * self.theta_max)
    }
}

pub(crate) fn check_severity(s: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidArgument(format!(
            "severity {s} outside [0, 1]"
        )));
    }
    Ok(())
}

/// How many continuous channels a channel-scoped scenario perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ChannelRule {
    /// Severity-coupled count `1 + floor(s·(ceil(γ_max·m_cont) − 1))`.
    Coupled { gamma_max: f64 },
    /// `ceil(q·m_cont)` for every positive severity.
    FixedFraction { gamma_max: f64, q: f64 },
}

impl Default for ChannelRule {
    fn default() -> Self {
        ChannelRule::Coupled { gamma_max: 0.5 }
    }
}

impl ChannelRule {
    pub fn coupled(gamma_max: f64) -> Result<Self> {
        let rule = ChannelRule::Coupled { gamma_max };
        rule.validate()?;
        Ok(rule)
    }

    pub fn fixed(gamma_max: f64, q: f64) -> Result<Self> {
        let rule = ChannelRule::FixedFraction { gamma_max, q };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        let (gamma_max, q) = match *self {
            ChannelRule::Coupled { gamma_max } => (gamma_max, None),
            ChannelRule::FixedFraction { gamma_max, q } => (gamma_max, Some(q)),
        };
        if !(gamma_max > 0.0 && gamma_max <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma_max {gamma_max} outside (0, 1]"
            )));
        }
        if let Some(q) = q {
            if !(q > 0.0 && q <= gamma_max) {
                return Err(Error::InvalidArgument(format!(
                    "fixed fraction q={q} outside (0, gamma_max={gamma_max}]"
                )));
            }
        }
        Ok(())
    }

    pub fn count(&self, s: f64, m_cont: usize) -> Result<usize> {
        match *self {
            ChannelRule::Coupled { gamma_max } => channel_count(s, m_cont, gamma_max),
            ChannelRule::FixedFraction { q, .. } => channel_count_fixed(s, m_cont, q),
        }
    }

    /// Upper bound on the affected-channel count.
    pub fn cap(&self, m_cont: usize) -> usize {
        match *self {
            ChannelRule::Coupled { gamma_max } => (gamma_max * m_cont as f64).ceil() as usize,
            ChannelRule::FixedFraction { q, .. } => (q * m_cont as f64).ceil() as usize,
        }
    }
}

impl fmt::Display for ChannelRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelRule::Coupled { .. } => f.write_str("coupled"),
            ChannelRule::FixedFraction { q, .. } => write!(f, "fixed:{q}"),
        }
    }
}

/// Parses `coupled` or `fixed:<q>` with the default `γ_max = 0.5`.
impl FromStr for ChannelRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "coupled" {
            return ChannelRule::coupled(0.5);
        }
        if let Some(q) = s.strip_prefix("fixed:") {
            let q: f64 = q
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad fixed fraction in {s:?}")))?;
            return ChannelRule::fixed(0.5, q);
        }
        Err(Error::InvalidArgument(format!(
            "channel rule must be `coupled` or `fixed:<q>`, got {s:?}"
        )))
    }
}

pub fn channel_count(s: f64, m_cont: usize, gamma_max: f64) -> Result<usize> {
    check_severity(s)?;
    if m_cont == 0 {
        return Err(Error::InvalidArgument("no continuous channels".into()));
    }
    if s == 0.0 {
        return Ok(0);
    }
    let cap = (gamma_max * m_cont as f64).ceil() as usize;
    Ok(1 + (s * (cap.max(1) - 1) as f64).floor() as usize)
}

pub fn channel_count_fixed(s: f64, m_cont: usize, q: f64) -> Result<usize> {
    check_severity(s)?;
    if m_cont == 0 {
        return Err(Error::InvalidArgument("no continuous channels".into()));
    }
    if s == 0.0 {
        return Ok(0);
    }
    Ok((q * m_cont as f64).ceil() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_match_protocol_table() {
        let expect = [
            (ScenarioId::Drift, 0.0, 0.75),
            (ScenarioId::Attenuation, 1.0, 0.25),
            (ScenarioId::Noise, 0.0, 1.0),
            (ScenarioId::Spike, 0.0, 7.5),
            (ScenarioId::TimeStretch, 1.0, 5.0),
            (ScenarioId::TimeCompress, 1.0, 0.1),
            (ScenarioId::StuckSensor, 0.0, 1.0),
            (ScenarioId::MissingData, 0.0, 0.5),
        ];
        for (id, lo, hi) in expect {
            let spec = ScenarioSpec::benchmark(id).unwrap();
            assert_eq!((spec.theta_min, spec.theta_max), (lo, hi), "{id}");
            assert_eq!(spec.severity_map(0.0).unwrap(), lo);
            assert_eq!(spec.severity_map(1.0).unwrap(), hi);
        }
        for t in TRANSFER {
            assert!(ScenarioSpec::benchmark(t).is_none());
        }
    }

    #[test]
    fn severity_map_values() {
        let drift = ScenarioSpec::benchmark(ScenarioId::Drift).unwrap();
        assert_eq!(drift.severity_map(1.0).unwrap(), 0.75);
        let att = ScenarioSpec::benchmark(ScenarioId::Attenuation).unwrap();
        assert_eq!(att.severity_map(0.5).unwrap(), 0.625);
        assert!(att.severity_map(1.5).is_err());
        assert!(att.severity_map(-0.1).is_err());
    }

    #[test]
    fn channel_counts() {
        assert_eq!(channel_count(0.0, 11, 0.5).unwrap(), 0);
        assert_eq!(channel_count(1.0, 11, 0.5).unwrap(), 6);
        assert_eq!(channel_count(0.5, 7, 0.5).unwrap(), 2);
        assert_eq!(channel_count(1e-9, 7, 0.5).unwrap(), 1);
        assert_eq!(channel_count_fixed(0.3, 65, 0.25).unwrap(), 17);
        assert_eq!(channel_count_fixed(0.3, 862, 0.5).unwrap(), 431);
        assert_eq!(channel_count_fixed(0.0, 862, 0.5).unwrap(), 0);
        assert!(channel_count(0.5, 0, 0.5).is_err());
    }

    #[test]
    fn sets_are_disjoint_and_ordered() {
        for t in TRANSFER {
            assert!(!BENCHMARK.contains(&t));
        }
        for (i, p) in BENCHMARK.iter().enumerate() {
            assert_eq!(p.benchmark_ordinal(), Some(i));
            assert_eq!(p.name().parse::<ScenarioId>().unwrap(), *p);
        }
        let ordered = benchmark_order(&[ScenarioId::Noise, ScenarioId::Drift]).unwrap();
        assert_eq!(ordered, vec![ScenarioId::Drift, ScenarioId::Noise]);
        assert!(benchmark_order(&[ScenarioId::Scaling]).is_err());
        assert!(benchmark_order(&[ScenarioId::Drift, ScenarioId::Drift]).is_err());
        assert!("drift".parse::<ScenarioId>().is_err());
    }

    #[test]
    fn channel_rule_parsing() {
        assert_eq!(
            "coupled".parse::<ChannelRule>().unwrap(),
            ChannelRule::Coupled { gamma_max: 0.5 }
        );
        assert_eq!(
            "fixed:0.25".parse::<ChannelRule>().unwrap(),
            ChannelRule::FixedFraction {
                gamma_max: 0.5,
                q: 0.25
            }
        );
        assert!("fixed:0.75".parse::<ChannelRule>().is_err());
        assert!("fixed:0".parse::<ChannelRule>().is_err());
        assert!("both".parse::<ChannelRule>().is_err());
        assert!(ChannelRule::coupled(1.5).is_err());
    }
}
