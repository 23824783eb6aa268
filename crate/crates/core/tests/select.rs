mod common;

use std::sync::Arc;

use ndarray::Array2;
use sensorfault::dataset::WindowSource;
use sensorfault::forecast::{
    fit_fault_augmented, fit_linear, select_seasonal_period, select_winner, ConstantForecaster,
    SelectorMode, ValidationWindows,
};
use sensorfault::{Error, EvalConfig, Forecaster, Split, WindowSetting, TRANSFER};

use common::{daily, random_walk, source};

fn val(ds: sensorfault::TimeSeriesDataset, setting: WindowSetting) -> ValidationWindows {
    ValidationWindows::new(source(ds, Split::Val, setting).0).unwrap()
}

/// Mean clean MSE of seasonal naive with period `p`, computed directly.
fn naive_mse(v: &ValidationWindows, p: usize, horizon: usize) -> f64 {
    let src = v.source();
    let mut total = 0.0;
    for &s in src.starts() {
        let w = src.window(s);
        let n = w.x.nrows();
        let mut sq = 0.0;
        for t in 0..horizon {
            let e = w.x[[n - p + t % p, 0]] - w.y[[t, 0]];
            sq += e * e;
        }
        total += sq / horizon as f64;
    }
    total / src.starts().len() as f64
}

#[test]
fn daily_series_selects_daily_period() {
    let setting = WindowSetting::new(48, 24).unwrap();
    let v = val(daily(1500, 2, 1), setting);
    assert!(naive_mse(&v, 24, 24) < naive_mse(&v, 1, 24));
    assert_eq!(
        select_seasonal_period(&[1, 24], &v, 24, &[0], 0).unwrap(),
        24
    );
}

#[test]
fn random_walk_selects_last_value() {
    let setting = WindowSetting::new(48, 6).unwrap();
    let v = val(random_walk(1500, 1, 2), setting);
    assert!(naive_mse(&v, 1, 6) < naive_mse(&v, 24, 6));
    assert_eq!(select_seasonal_period(&[24, 1], &v, 6, &[0], 0).unwrap(), 1);
}

#[test]
fn equal_errors_prefer_smaller_period() {
    // a constant series makes every period exact
    let ds = sensorfault::TimeSeriesDataset::new(
        Array2::from_elem((400, 1), 3.0),
        common::schema(1, vec![0]),
    )
    .unwrap();
    let v = val(ds, WindowSetting::new(24, 4).unwrap());
    assert_eq!(select_seasonal_period(&[24, 1], &v, 4, &[0], 0).unwrap(), 1);
}

#[test]
fn selection_refuses_test_windows() {
    let (test, _) = source(
        daily(600, 1, 3),
        Split::Test,
        WindowSetting::new(24, 4).unwrap(),
    );
    assert!(matches!(
        ValidationWindows::new(test),
        Err(Error::ProtocolViolation(_))
    ));
}

fn constant(v: f64) -> Arc<dyn Forecaster> {
    Arc::new(ConstantForecaster::new(Array2::from_elem((4, 1), v)))
}

#[test]
fn single_candidate_and_ties() {
    let v = val(daily(600, 1, 4), WindowSetting::new(24, 4).unwrap());
    let cfg = EvalConfig {
        k: 20,
        bootstrap: 0,
        ..Default::default()
    };
    let one = vec![("only".to_string(), constant(0.0))];
    assert_eq!(
        select_winner(&one, &v, SelectorMode::CleanValidation, &cfg).unwrap(),
        "only"
    );
    let tied = vec![
        ("b".to_string(), constant(0.0)),
        ("a".to_string(), constant(0.0)),
    ];
    assert_eq!(
        select_winner(&tied, &v, SelectorMode::CleanValidation, &cfg).unwrap(),
        "a"
    );
    assert_eq!(
        select_winner(
            &tied,
            &v,
            SelectorMode::WorstScenarioPerturbedValidation,
            &cfg
        )
        .unwrap(),
        "a"
    );
}

#[test]
fn lower_clean_error_wins() {
    // the daily series has mean ≈ 0, so predicting 0 beats predicting 1
    let v = val(daily(600, 1, 5), WindowSetting::new(24, 4).unwrap());
    let cfg = EvalConfig::default();
    let c = vec![
        ("one".to_string(), constant(1.0)),
        ("zero".to_string(), constant(0.0)),
    ];
    assert_eq!(
        select_winner(&c, &v, SelectorMode::CleanValidation, &cfg).unwrap(),
        "zero"
    );
}

#[test]
fn clean_and_perturbed_selectors_can_disagree() {
    // Target channel 0 is a noisy copy of a latent AR(1) signal; channel 1
    // is a cleaner copy. A clean fit leans on channel 1, which the faults can
    // hit without touching the target history; fault augmentation spreads the
    // weight and gives up a little clean accuracy.
    let mut s = sensorfault::rng::Stream::from_seed(21);
    let rows = 3000;
    let mut z = 0.0;
    let mut values = Array2::zeros((rows, 2));
    for i in 0..rows {
        z = 0.95 * z + 0.3 * s.normal();
        values[[i, 0]] = z + 0.3 * s.normal();
        values[[i, 1]] = z + 0.05 * s.normal();
    }
    let ds = sensorfault::TimeSeriesDataset::new(values, common::schema(2, vec![0])).unwrap();
    let setting = WindowSetting::new(8, 1).unwrap();
    let ds = Arc::new(ds);
    let bounds = sensorfault::dataset::chronological_split(rows, [0.6, 0.2, 0.2], setting).unwrap();
    let train_src = WindowSource::new(ds.clone(), &bounds, Split::Train, setting).unwrap();
    let train: Vec<_> = train_src
        .starts()
        .iter()
        .map(|&st| train_src.window(st))
        .collect();
    let v = ValidationWindows::new(
        WindowSource::new(ds.clone(), &bounds, Split::Val, setting).unwrap(),
    )
    .unwrap();

    let plain = fit_linear(&train, 1e-3, 1).unwrap();
    let augmented = fit_fault_augmented(&train, 1e-3, 1.0, &TRANSFER, ds.schema(), 1).unwrap();
    let candidates: Vec<(String, Arc<dyn Forecaster>)> = vec![
        ("augmented".into(), Arc::new(augmented)),
        ("plain".into(), Arc::new(plain)),
    ];
    let cfg = EvalConfig {
        k: 2000,
        eval_seed: 3,
        bootstrap: 0,
        ..Default::default()
    };
    let clean = select_winner(&candidates, &v, SelectorMode::CleanValidation, &cfg).unwrap();
    let perturbed = select_winner(
        &candidates,
        &v,
        SelectorMode::WorstScenarioPerturbedValidation,
        &cfg,
    )
    .unwrap();
    assert_eq!(clean, "plain");
    assert_eq!(perturbed, "augmented");
}
