use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Forecaster, SeasonalNaiveModel};
use crate::dataset::{Split, WindowSource};
use crate::error::{Error, Result};
use crate::score::{clean_mse, evaluate, EvalConfig};

/// Windows drawn from the validation split. Selection routines accept only
/// this type, so test windows cannot reach them.
#[derive(Debug, Clone)]
pub struct ValidationWindows(WindowSource);

impl ValidationWindows {
    pub fn new(source: WindowSource) -> Result<Self> {
        if source.split() != Split::Val {
            return Err(Error::ProtocolViolation(format!(
                "selection must use validation windows, got the {} split",
                source.split()
            )));
        }
        Ok(Self(source))
    }

    pub fn source(&self) -> &WindowSource {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectorMode {
    #[default]
    CleanValidation,
    WorstScenarioPerturbedValidation,
}

/// Period with the lowest mean clean validation MSE; ties go to the smaller
/// period.
pub fn select_seasonal_period(
    candidates: &[usize],
    val: &ValidationWindows,
    horizon: usize,
    targets: &[usize],
    workers: usize,
) -> Result<usize> {
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut best: Option<(usize, f64)> = None;
    for p in sorted {
        let model = SeasonalNaiveModel::new(p, horizon, targets.to_vec());
        let mse = clean_mse(&model, val.source(), val.source().starts(), workers)?;
        if best.is_none_or(|(_, b)| mse < b) {
            best = Some((p, mse));
        }
    }
    best.map(|(p, _)| p)
        .ok_or_else(|| Error::InvalidArgument("no candidate periods".into()))
}

/// Pick the candidate minimizing the selector objective on validation
/// windows. Exact ties go to the lexicographically smallest id.
///
/// Clean mode scores every validation window in `val`. Perturbed mode runs
/// the uniform-severity estimator on `val` with `cfg` and scores the largest
/// per-scenario MSE.
pub fn select_winner(
    candidates: &[(String, Arc<dyn Forecaster>)],
    val: &ValidationWindows,
    mode: SelectorMode,
    cfg: &EvalConfig,
) -> Result<String> {
    let mut order: Vec<&(String, Arc<dyn Forecaster>)> = candidates.iter().collect();
    order.sort_by(|a, b| a.0.cmp(&b.0));
    let mut best: Option<(&str, f64)> = None;
    for (id, f) in order {
        let objective = match mode {
            SelectorMode::CleanValidation => {
                clean_mse(f.as_ref(), val.source(), val.source().starts(), cfg.workers)?
            }
            SelectorMode::WorstScenarioPerturbedValidation => {
                let report = evaluate(f.as_ref(), val.source(), cfg)?;
                report
                    .scenarios
                    .iter()
                    .map(|s| s.mse)
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        };
        if best.is_none_or(|(_, b)| objective < b) {
            best = Some((id, objective));
        }
    }
    best.map(|(id, _)| id.to_string())
        .ok_or_else(|| Error::InvalidArgument("no candidates to select from".into()))
}
