//! Data preparation, candidate construction and validation-only selection.

use std::sync::Arc;
use std::time::Duration;

use sensorfault::dataset::{
    chronological_split, fit_standardizer, load_csv, LoadOptions, SplitBounds,
};
use sensorfault::forecast::{
    fit_fault_augmented, fit_linear, fit_linear_ensemble, select_seasonal_period, select_winner,
    ExternalConfig, ExternalModel, MethodVariant, SeasonalNaiveModel, SelectorMode,
    SmoothedForecaster, ValidationWindows,
};
use sensorfault::rng::{derive_key, tag};
use sensorfault::{
    ChannelSchema, EvalConfig, Forecaster, Split, TimeSeriesDataset, WindowSample, WindowSetting,
    WindowSource,
};

use crate::config::{ModelConfig, RunConfig, Seeds};
use crate::CliError;

/// A loaded, split and standardized dataset.
pub struct Prepared {
    pub schema: ChannelSchema,
    pub setting: WindowSetting,
    pub bounds: SplitBounds,
    pub data: Arc<TimeSeriesDataset>,
}

impl Prepared {
    pub fn load(cfg: &RunConfig) -> Result<Self, CliError> {
        let schema = cfg.schema()?;
        let setting = WindowSetting::new(cfg.window.input, cfg.window.horizon)?;
        let opts = LoadOptions {
            timestamp_column: cfg.dataset.timestamp_column,
            min_rows: cfg.dataset.min_rows,
        };
        let raw = load_csv(&cfg.dataset.path, &schema, &opts)?;
        let bounds = chronological_split(raw.rows(), cfg.dataset.splits, setting)?;
        let data = fit_standardizer(&raw, &bounds)?.apply(&raw)?;
        Ok(Self {
            schema,
            setting,
            bounds,
            data: Arc::new(data),
        })
    }

    pub fn source(&self, split: Split) -> Result<WindowSource, CliError> {
        Ok(WindowSource::new(
            self.data.clone(),
            &self.bounds,
            split,
            self.setting,
        )?)
    }

    fn train_windows(&self, cap: usize, seed: u64) -> Result<Vec<WindowSample>, CliError> {
        let src = self.source(Split::Train)?;
        Ok(src
            .capped_starts(cap, seed)?
            .into_iter()
            .map(|s| src.window(s))
            .collect())
    }
}

pub type Candidate = (String, Arc<dyn Forecaster>);

/// The selected model and the ids it was chosen from.
pub struct Fitted {
    pub id: String,
    pub model: Arc<dyn Forecaster>,
    pub candidates: Vec<String>,
}

fn unsupported(method: &MethodVariant, model: &ModelConfig) -> CliError {
    let kind = match model {
        ModelConfig::SeasonalNaive { .. } => "seasonal-naive",
        ModelConfig::Linear { .. } => "linear",
        ModelConfig::External { .. } => "external",
    };
    CliError::Config(format!(
        "method {} needs kind = \"linear\", not {kind:?}",
        method.name()
    ))
}

/// Build every candidate for `method` on the configured model grid.
pub fn candidates(
    cfg: &RunConfig,
    prep: &Prepared,
    method: &MethodVariant,
    seeds: Seeds,
) -> Result<Vec<Candidate>, CliError> {
    let horizon = prep.setting.horizon;
    let targets = prep.schema.targets().to_vec();
    let plain = matches!(
        method,
        MethodVariant::Baseline | MethodVariant::RandomizedSmoothing { .. }
    );
    let base: Vec<Arc<dyn Forecaster>> = match &cfg.model {
        ModelConfig::SeasonalNaive { periods } if plain => periods
            .iter()
            .map(|&p| {
                Arc::new(SeasonalNaiveModel::new(p, horizon, targets.clone()))
                    as Arc<dyn Forecaster>
            })
            .collect(),
        ModelConfig::Linear {
            ridge,
            max_candidates,
            train_cap,
        } => {
            let train = prep.train_windows(*train_cap, seeds.data)?;
            let mut out: Vec<Arc<dyn Forecaster>> = Vec::new();
            for &lambda in ridge.iter().take(*max_candidates) {
                out.push(match method {
                    MethodVariant::Ensemble {
                        members,
                        aggregator,
                    } => Arc::new(fit_linear_ensemble(
                        &train,
                        lambda,
                        *members,
                        *aggregator,
                        seeds.model,
                    )?),
                    MethodVariant::FaultAugmentation { p_aug, pool } => {
                        Arc::new(fit_fault_augmented(
                            &train,
                            lambda,
                            *p_aug,
                            pool,
                            &prep.schema,
                            seeds.model,
                        )?)
                    }
                    _ => Arc::new(fit_linear(&train, lambda, seeds.model)?),
                });
            }
            out
        }
        ModelConfig::External {
            command,
            timeout_secs,
            processes,
        } if plain => {
            let mut ext = ExternalConfig::new(command[0].clone(), command[1..].to_vec());
            ext.timeout = Duration::from_secs_f64(*timeout_secs);
            ext.workers = *processes;
            let model = ExternalModel::spawn(
                &ext,
                prep.setting.input,
                horizon,
                prep.schema.len(),
                prep.schema.targets(),
            )?
            .with_id(format!("external({})", command.join(" ")));
            vec![Arc::new(model)]
        }
        other => return Err(unsupported(method, other)),
    };
    let wrapped = match *method {
        MethodVariant::RandomizedSmoothing {
            sigma,
            queries,
            alpha,
        } => base
            .into_iter()
            .map(|b| {
                SmoothedForecaster::new(b, sigma, queries, alpha, seeds.model)
                    .map(|s| Arc::new(s) as Arc<dyn Forecaster>)
            })
            .collect::<Result<Vec<_>, _>>()?,
        _ => base,
    };
    Ok(wrapped
        .into_iter()
        .map(|f| (f.id().to_string(), f))
        .collect())
}

/// Estimator settings for perturbed-validation selection. The seed comes
/// from the data seed, so overriding the evaluation seed never changes which
/// model is fitted.
pub fn selection_config(eval: &EvalConfig, seeds: Seeds) -> EvalConfig {
    EvalConfig {
        eval_seed: derive_key(seeds.data, &[tag::EVAL]),
        bootstrap: 0,
        ..eval.clone()
    }
}

/// Build candidates and pick one using validation windows only.
pub fn fit_winner(
    cfg: &RunConfig,
    prep: &Prepared,
    method: &MethodVariant,
    selector: SelectorMode,
    eval: &EvalConfig,
) -> Result<Fitted, CliError> {
    let seeds = cfg.seeds();
    let pool = candidates(cfg, prep, method, seeds)?;
    let ids: Vec<String> = pool.iter().map(|(id, _)| id.clone()).collect();
    let id = if pool.len() == 1 {
        ids[0].clone()
    } else {
        let val = ValidationWindows::new(prep.source(Split::Val)?)?;
        match (&cfg.model, method, selector) {
            (
                ModelConfig::SeasonalNaive { periods },
                MethodVariant::Baseline,
                SelectorMode::CleanValidation,
            ) => {
                let p = select_seasonal_period(
                    periods,
                    &val,
                    prep.setting.horizon,
                    prep.schema.targets(),
                    eval.workers,
                )?;
                SeasonalNaiveModel::new(p, prep.setting.horizon, prep.schema.targets().to_vec())
                    .id()
                    .to_string()
            }
            _ => select_winner(&pool, &val, selector, &selection_config(eval, seeds))?,
        }
    };
    let model = pool
        .into_iter()
        .find(|(c, _)| *c == id)
        .map(|(_, f)| f)
        .ok_or_else(|| {
            CliError::Config(format!(
                "selected id {id} is not a candidate; candidate ids must be unique"
            ))
        })?;
    Ok(Fitted {
        id,
        model,
        candidates: ids,
    })
}
