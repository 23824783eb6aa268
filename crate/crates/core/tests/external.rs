mod common;

use std::time::{Duration, Instant};

use ndarray::Array2;
use sensorfault::forecast::{ExternalConfig, ExternalModel, SeasonalNaiveModel};
use sensorfault::{evaluate, Error, EvalConfig, Forecaster, Split, WindowSetting};

use common::{source, stub, white_noise};

fn config(args: &[&str]) -> ExternalConfig {
    let mut cfg = ExternalConfig::new(stub(), args.iter().map(|s| s.to_string()).collect());
    cfg.timeout = Duration::from_secs(20);
    cfg
}

fn windows(count: usize) -> Vec<Array2<f64>> {
    let (src, _) = source(
        white_noise(400, 3, 5),
        Split::Test,
        WindowSetting::new(12, 4).unwrap(),
    );
    src.starts()
        .iter()
        .take(count)
        .map(|&s| src.window(s).x)
        .collect()
}

fn adapter_code(result: Result<Vec<Array2<f64>>, Error>) -> &'static str {
    match result {
        Err(Error::Adapter(e)) => e.code(),
        Err(other) => panic!("expected adapter error, got {other}"),
        Ok(_) => panic!("expected adapter error, got predictions"),
    }
}

#[test]
fn stub_matches_last_value() {
    let model = ExternalModel::spawn(&config(&[]), 12, 4, 3, &[0, 2]).unwrap();
    let builtin = SeasonalNaiveModel::last_value(4, vec![0, 2]);
    let xs = windows(3);
    let preds = model.predict_batch(&xs).unwrap();
    for (x, p) in xs.iter().zip(&preds) {
        let expected = builtin.predict(x.view()).unwrap();
        assert_eq!(p.dim(), (4, 2));
        assert!(p.iter().zip(&expected).all(|(a, b)| (a - b).abs() <= 1e-9));
    }
    assert_eq!(model.predict(xs[0].view()).unwrap(), preds[0]);
}

#[test]
fn out_of_order_replies_are_reordered() {
    let model = ExternalModel::spawn(&config(&["--reverse"]), 12, 4, 3, &[1]).unwrap();
    let builtin = SeasonalNaiveModel::last_value(4, vec![1]);
    let xs = windows(25);
    let preds = model.predict_batch(&xs).unwrap();
    for (x, p) in xs.iter().zip(&preds) {
        assert_eq!(p, &builtin.predict(x.view()).unwrap());
    }
}

#[test]
fn wrong_horizon_is_shape_mismatch() {
    let model = ExternalModel::spawn(&config(&["--fault", "bad-horizon"]), 12, 4, 3, &[0]).unwrap();
    assert_eq!(
        adapter_code(model.predict_batch(&windows(2))),
        "shape-mismatch"
    );
}

#[test]
fn garbage_is_malformed_frame() {
    let model = ExternalModel::spawn(&config(&["--fault", "garbage"]), 12, 4, 3, &[0]).unwrap();
    assert_eq!(
        adapter_code(model.predict_batch(&windows(2))),
        "malformed-frame"
    );
}

#[test]
fn crash_is_process_exit() {
    let model = ExternalModel::spawn(&config(&["--fault", "exit"]), 12, 4, 3, &[0]).unwrap();
    assert_eq!(
        adapter_code(model.predict_batch(&windows(2))),
        "process-exit"
    );
    // the adapter stays failed afterwards
    assert_eq!(
        adapter_code(model.predict_batch(&windows(1))),
        "process-exit"
    );
}

#[test]
fn unknown_id_is_id_mismatch() {
    let model = ExternalModel::spawn(&config(&["--fault", "wrong-id"]), 12, 4, 3, &[0]).unwrap();
    assert_eq!(
        adapter_code(model.predict_batch(&windows(2))),
        "id-mismatch"
    );
}

#[test]
fn error_frame_is_remote_error() {
    let model =
        ExternalModel::spawn(&config(&["--fault", "remote-error"]), 12, 4, 3, &[0]).unwrap();
    assert_eq!(
        adapter_code(model.predict_batch(&windows(2))),
        "remote-error"
    );
}

#[test]
fn silent_model_times_out() {
    let mut cfg = config(&["--fault", "hang"]);
    cfg.timeout = Duration::from_millis(300);
    let model = ExternalModel::spawn(&cfg, 12, 4, 3, &[0]).unwrap();
    let t = Instant::now();
    assert_eq!(adapter_code(model.predict_batch(&windows(2))), "timeout");
    assert!(t.elapsed() < Duration::from_secs(5));
}

#[test]
fn wrong_input_shape_rejected_before_sending() {
    let model = ExternalModel::spawn(&config(&[]), 12, 4, 3, &[0]).unwrap();
    assert!(matches!(
        model.predict(Array2::zeros((11, 3)).view()),
        Err(Error::ShapeMismatch { .. })
    ));
}

#[test]
fn pooled_processes_match_builtin_evaluation() {
    let (src, _) = source(
        white_noise(600, 4, 8),
        Split::Test,
        WindowSetting::new(16, 3).unwrap(),
    );
    let cfg = EvalConfig {
        k: 120,
        eval_seed: 4,
        bootstrap: 0,
        workers: 4,
        ..Default::default()
    };
    let mut ext_cfg = config(&[]);
    ext_cfg.workers = 3;
    let model = ExternalModel::spawn(&ext_cfg, 16, 3, 4, &[0])
        .unwrap()
        .with_id("last-value");
    let builtin = SeasonalNaiveModel::last_value(3, vec![0]);
    let via_adapter = evaluate(&model, &src, &cfg).unwrap();
    let direct = evaluate(&builtin, &src, &cfg).unwrap();
    assert_eq!(via_adapter.windows, direct.windows);
}
