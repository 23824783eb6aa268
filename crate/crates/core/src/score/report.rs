use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::compare::{EffectiveRobustness, ReferenceNormalized};
use super::sequential_mean;
use crate::error::{Error, Result};
use crate::faults::{ChannelRule, ScenarioId};
use crate::stats::Interval;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Everything that must agree for two reports to be compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEcho {
    pub k: usize,
    pub eval_seed: u64,
    pub scenarios: Vec<ScenarioId>,
    pub channel_rule: ChannelRule,
    pub bootstrap: usize,
    pub level: f64,
    pub input: usize,
    pub horizon: usize,
    pub split: String,
    pub eligible_windows: usize,
    pub dataset: String,
}

/// Per-window losses in sampling order. `perturbed[p][k]` is window `k`
/// under the `p`-th reported scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowLosses {
    pub starts: Vec<usize>,
    pub clean: Vec<f64>,
    pub perturbed: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScore {
    pub scenario: ScenarioId,
    pub mse: f64,
    pub degradation: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub scenario: ScenarioId,
    pub degradation: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCase {
    /// Mean degradation `D̄ = mPC / MSE_c`.
    pub degradation: f64,
    /// Mean corrupted MSE over scenarios.
    pub mpc: f64,
    /// `1 / D̄`.
    pub rpc: f64,
}

/// Headline numbers computed from a clean MSE and per-scenario MSEs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mse_clean: f64,
    pub mpc: f64,
    pub worst: Option<WorstCase>,
    pub mean_case: Option<MeanCase>,
}

impl Summary {
    /// `scenarios` must be in benchmark order so ties resolve to the earlier
    /// scenario.
    pub fn compute(mse_clean: f64, scenarios: &[ScenarioId], mses: &[f64]) -> Self {
        let mpc = sequential_mean(mses);
        if !(mse_clean > 0.0) || mses.is_empty() {
            return Self {
                mse_clean,
                mpc,
                worst: None,
                mean_case: None,
            };
        }
        let mut worst = WorstCase {
            scenario: scenarios[0],
            degradation: mses[0] / mse_clean,
            mse: mses[0],
        };
        for (&p, &mse) in scenarios.iter().zip(mses).skip(1) {
            let d = mse / mse_clean;
            if d > worst.degradation {
                worst = WorstCase {
                    scenario: p,
                    degradation: d,
                    mse,
                };
            }
        }
        let d_mean = mpc / mse_clean;
        Self {
            mse_clean,
            mpc,
            worst: Some(worst),
            mean_case: Some(MeanCase {
                degradation: d_mean,
                mpc,
                rpc: 1.0 / d_mean,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub schema_version: u32,
    pub model: String,
    pub config: EvalEcho,
    pub mse_clean: f64,
    pub mean_corrupted_mse: f64,
    pub scenarios: Vec<ScenarioScore>,
    pub worst: Option<WorstCase>,
    pub mean_case: Option<MeanCase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceNormalized>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_robustness: Option<f64>,
    pub intervals: BTreeMap<String, Interval>,
    pub windows: WindowLosses,
}

impl RobustnessReport {
    pub fn from_losses(
        model: String,
        config: EvalEcho,
        scenarios: Vec<ScenarioId>,
        windows: WindowLosses,
    ) -> Self {
        let mse_clean = sequential_mean(&windows.clean);
        let mses: Vec<f64> = windows
            .perturbed
            .iter()
            .map(|l| sequential_mean(l))
            .collect();
        let summary = Summary::compute(mse_clean, &scenarios, &mses);
        let scenarios = scenarios
            .iter()
            .zip(&mses)
            .map(|(&scenario, &mse)| ScenarioScore {
                scenario,
                mse,
                degradation: summary.worst.map(|_| mse / mse_clean),
            })
            .collect();
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            model,
            config,
            mse_clean,
            mean_corrupted_mse: summary.mpc,
            scenarios,
            worst: summary.worst,
            mean_case: summary.mean_case,
            reference: None,
            effective_robustness: None,
            intervals: BTreeMap::new(),
            windows,
        }
    }

    pub fn scenario_ids(&self) -> Vec<ScenarioId> {
        self.scenarios.iter().map(|s| s.scenario).collect()
    }

    pub fn scenario_mses(&self) -> Vec<f64> {
        self.scenarios.iter().map(|s| s.mse).collect()
    }

    pub fn summary(&self) -> Summary {
        Summary {
            mse_clean: self.mse_clean,
            mpc: self.mean_corrupted_mse,
            worst: self.worst,
            mean_case: self.mean_case,
        }
    }

    /// Error unless degradation scores are defined (clean MSE > 0).
    pub fn require_degradation(&self) -> Result<(WorstCase, MeanCase)> {
        match (self.worst, self.mean_case) {
            (Some(w), Some(m)) => Ok((w, m)),
            _ => Err(Error::DegradationUndefined),
        }
    }

    pub fn attach_reference(&mut self, reference: ReferenceNormalized) {
        self.reference = Some(reference);
    }

    pub fn attach_effective_robustness(&mut self, fit: &EffectiveRobustness) {
        self.effective_robustness = fit
            .models
            .iter()
            .find(|(id, _)| *id == self.model)
            .map(|&(_, r)| r);
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidArgument(format!("report serialization: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidArgument(format!("report parse: {e}")))
    }

    /// `scenario,mse_p,d_p` rows in benchmark order.
    pub fn per_scenario_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["scenario", "mse_p", "d_p"])?;
        for s in &self.scenarios {
            w.write_record([
                s.scenario.name().to_string(),
                s.mse.to_string(),
                opt(s.degradation),
            ])?;
        }
        finish(w)
    }

    /// One header row and one value row with the headline scores and any
    /// interval bounds as `<stat>_lo`, `<stat>_hi`.
    pub fn summary_csv(&self) -> Result<String> {
        let mut header: Vec<String> = [
            "model",
            "mse_c",
            "d_w",
            "mse_w",
            "d_mean",
            "mpc",
            "rpc",
            "worst_scenario",
        ]
        .map(String::from)
        .to_vec();
        let mut row = vec![
            self.model.clone(),
            self.mse_clean.to_string(),
            opt(self.worst.map(|w| w.degradation)),
            opt(self.worst.map(|w| w.mse)),
            opt(self.mean_case.map(|m| m.degradation)),
            self.mean_corrupted_mse.to_string(),
            opt(self.mean_case.map(|m| m.rpc)),
            self.worst
                .map(|w| w.scenario.name().to_string())
                .unwrap_or_default(),
        ];
        if let Some(r) = &self.reference {
            header.extend(["mce", "relative_mce"].map(String::from));
            row.extend([opt(r.mce), opt(r.relative_mce)]);
        }
        if let Some(rho) = self.effective_robustness {
            header.push("effective_robustness".into());
            row.push(rho.to_string());
        }
        for (name, iv) in &self.intervals {
            header.extend([format!("{name}_lo"), format!("{name}_hi")]);
            row.extend([iv.lo.to_string(), iv.hi.to_string()]);
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header)?;
        w.write_record(&row)?;
        finish(w)
    }

    /// Write `report.json`, `per_scenario.csv` and `summary.csv`, creating
    /// `dir` if needed.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write(dir, "report.json", &self.to_json()?)?;
        write(dir, "per_scenario.csv", &self.per_scenario_csv()?)?;
        write(dir, "summary.csv", &self.summary_csv()?)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub(crate) fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|source| Error::Io { path, source })
}

/// `mse_p / mse_c`.
pub fn degradation(mse_p: f64, mse_c: f64) -> Result<f64> {
    if !(mse_c > 0.0) {
        return Err(Error::DegradationUndefined);
    }
    Ok(mse_p / mse_c)
}

pub fn worst_scenario(report: &RobustnessReport) -> Result<WorstCase> {
    if report.scenarios.is_empty() {
        return Err(Error::EmptyIndexSet("report has no scenarios".into()));
    }
    report.worst.ok_or(Error::DegradationUndefined)
}

pub fn mean_case(report: &RobustnessReport) -> Result<MeanCase> {
    report.mean_case.ok_or(Error::DegradationUndefined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faults::ScenarioId::*;

    #[test]
    fn degradation_examples() {
        assert_eq!(degradation(0.4, 0.2).unwrap(), 2.0);
        assert_eq!(degradation(0.3, 0.3).unwrap(), 1.0);
        assert_eq!(degradation(0.0, 0.5).unwrap(), 0.0);
        assert!(matches!(
            degradation(1.0, 0.0),
            Err(Error::DegradationUndefined)
        ));
    }

    #[test]
    fn worst_takes_largest_ratio() {
        let s = Summary::compute(1.0, &[Drift, Attenuation, Noise], &[1.1, 1.5, 1.2]);
        let w = s.worst.unwrap();
        assert_eq!((w.scenario, w.degradation, w.mse), (Attenuation, 1.5, 1.5));
    }

    #[test]
    fn ties_go_to_earlier_scenario() {
        let s = Summary::compute(0.5, &[Drift, Noise], &[0.7, 0.7]);
        assert_eq!(s.worst.unwrap().scenario, Drift);
    }

    #[test]
    fn mean_case_examples() {
        let ones = Summary::compute(0.3, &[Drift, Noise], &[0.3, 0.3])
            .mean_case
            .unwrap();
        assert_eq!((ones.degradation, ones.rpc), (1.0, 1.0));
        let two = Summary::compute(1.0, &[Drift, Noise], &[1.0, 2.0])
            .mean_case
            .unwrap();
        assert_eq!(two.degradation, 1.5);
    }

    #[test]
    fn zero_clean_mse_leaves_degradation_empty() {
        let s = Summary::compute(0.0, &[Drift], &[0.2]);
        assert!(s.worst.is_none() && s.mean_case.is_none());
        assert_eq!(s.mpc, 0.2);
    }
}
