use serde::{Deserialize, Serialize};

use super::RobustnessReport;
use crate::error::{Error, Result};
use crate::faults::ScenarioId;
use crate::stats::logspace_fit;

/// Per-scenario error ratios against a fixed reference forecaster, averaged
/// over scenarios (mean of ratios).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceNormalized {
    pub reference: String,
    /// Mean of `MSE_p(f) / MSE_p(ref)`; `None` if any reference MSE is zero.
    pub mce: Option<f64>,
    /// Mean of `(MSE_p(f) − MSE_c(f)) / (MSE_p(ref) − MSE_c(ref))`; `None`
    /// if the reference does not degrade on some scenario.
    pub relative_mce: Option<f64>,
    pub mce_flagged: Vec<ScenarioId>,
    pub relative_flagged: Vec<ScenarioId>,
}

fn comparable(a: &RobustnessReport, b: &RobustnessReport) -> Result<()> {
    if a.config != b.config {
        let what = if a.config.dataset != b.config.dataset {
            "different datasets".to_string()
        } else if a.config.scenarios != b.config.scenarios {
            "different scenario sets".to_string()
        } else {
            "different evaluation settings".to_string()
        };
        return Err(Error::ConfigMismatch(format!(
            "{} vs {}: {what}",
            a.model, b.model
        )));
    }
    Ok(())
}

pub fn reference_normalized(
    report: &RobustnessReport,
    reference: &RobustnessReport,
) -> Result<ReferenceNormalized> {
    comparable(report, reference)?;
    let mut ratios = Vec::new();
    let mut relative = Vec::new();
    let mut mce_flagged = Vec::new();
    let mut relative_flagged = Vec::new();
    for (f, r) in report.scenarios.iter().zip(&reference.scenarios) {
        if r.mse > 0.0 {
            ratios.push(f.mse / r.mse);
        } else {
            mce_flagged.push(r.scenario);
        }
        let denom = r.mse - reference.mse_clean;
        if denom > 0.0 {
            relative.push((f.mse - report.mse_clean) / denom);
        } else {
            relative_flagged.push(r.scenario);
        }
    }
    let mean = |v: &[f64], flagged: &[ScenarioId]| {
        (flagged.is_empty() && !v.is_empty()).then(|| super::sequential_mean(v))
    };
    Ok(ReferenceNormalized {
        reference: reference.model.clone(),
        mce: mean(&ratios, &mce_flagged),
        relative_mce: mean(&relative, &relative_flagged),
        mce_flagged,
        relative_flagged,
    })
}

/// Log-space frontier `mPC ≈ exp(a + b·log MSE_c)` fitted over a model pool,
/// and each model's residual below it (higher is better).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveRobustness {
    pub a: f64,
    pub b: f64,
    pub models: Vec<(String, f64)>,
}

pub fn effective_robustness(pool: &[&RobustnessReport]) -> Result<EffectiveRobustness> {
    if pool.len() < 2 {
        return Err(Error::FitUndefined(format!(
            "pool has {} models, need at least 2",
            pool.len()
        )));
    }
    let x: Vec<f64> = pool.iter().map(|r| r.mse_clean).collect();
    let y: Vec<f64> = pool.iter().map(|r| r.mean_corrupted_mse).collect();
    let (a, b) = logspace_fit(&x, &y)?;
    let models = pool
        .iter()
        .map(|r| {
            (
                r.model.clone(),
                (a + b * r.mse_clean.ln()).exp() - r.mean_corrupted_mse,
            )
        })
        .collect();
    Ok(EffectiveRobustness { a, b, models })
}

/// Variant-minus-baseline differences for one matched pair. Negative values
/// favor the variant, except `tau` where positive favors it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDelta {
    pub baseline: String,
    pub variant: String,
    pub d_w: f64,
    pub mse_c: f64,
    /// Each model at its own worst scenario.
    pub mse_w: f64,
    pub d_mean: f64,
    pub mpc: f64,
    /// Baseline minus variant mean corrupted MSE.
    pub tau: f64,
}

pub fn paired_deltas(variant: &RobustnessReport, baseline: &RobustnessReport) -> Result<PairDelta> {
    comparable(variant, baseline)?;
    let (vw, vm) = variant.require_degradation()?;
    let (bw, bm) = baseline.require_degradation()?;
    Ok(PairDelta {
        baseline: baseline.model.clone(),
        variant: variant.model.clone(),
        d_w: vw.degradation - bw.degradation,
        mse_c: variant.mse_clean - baseline.mse_clean,
        mse_w: vw.mse - bw.mse,
        d_mean: vm.degradation - bm.degradation,
        mpc: variant.mean_corrupted_mse - baseline.mean_corrupted_mse,
        tau: baseline.mean_corrupted_mse - variant.mean_corrupted_mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faults::{ChannelRule, ScenarioId::*};
    use crate::score::{EvalEcho, WindowLosses};

    fn echo() -> EvalEcho {
        EvalEcho {
            k: 2,
            eval_seed: 1,
            scenarios: vec![Drift, Noise],
            channel_rule: ChannelRule::default(),
            bootstrap: 0,
            level: 0.95,
            input: 4,
            horizon: 1,
            split: "test".into(),
            eligible_windows: 10,
            dataset: "x".into(),
        }
    }

    fn report(model: &str, clean: f64, drift: f64, noise: f64) -> RobustnessReport {
        RobustnessReport::from_losses(
            model.into(),
            echo(),
            vec![Drift, Noise],
            WindowLosses {
                starts: vec![0, 1],
                clean: vec![clean; 2],
                perturbed: vec![vec![drift; 2], vec![noise; 2]],
            },
        )
    }

    #[test]
    fn self_reference_is_unity() {
        let r = report("ref", 0.3, 0.5, 0.7);
        let n = reference_normalized(&r, &r).unwrap();
        assert_eq!(n.mce, Some(1.0));
        assert_eq!(n.relative_mce, Some(1.0));
    }

    #[test]
    fn half_error_halves_mce() {
        let r = report("ref", 0.3, 0.5, 0.7);
        let f = report("f", 0.1, 0.25, 0.35);
        assert_eq!(reference_normalized(&f, &r).unwrap().mce, Some(0.5));
    }

    #[test]
    fn non_degrading_reference_flags_relative() {
        let r = report("ref", 0.5, 0.5, 0.7);
        let n = reference_normalized(&report("f", 0.1, 0.2, 0.3), &r).unwrap();
        assert_eq!(n.relative_flagged, vec![Drift]);
        assert!(n.relative_mce.is_none());
        assert!(n.mce.is_some());
    }

    #[test]
    fn deltas_and_tau() {
        let base = report("base", 0.2, 0.26, 0.24);
        let var = report("var", 0.2, 0.25, 0.22);
        let d = paired_deltas(&var, &base).unwrap();
        assert_eq!(d.tau, -d.mpc);
        assert!(d.d_w < 0.0);
        let same = paired_deltas(&base, &base).unwrap();
        assert_eq!(
            (
                same.d_w,
                same.mse_c,
                same.mse_w,
                same.d_mean,
                same.mpc,
                same.tau
            ),
            (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn mismatched_configs_refused() {
        let a = report("a", 0.2, 0.3, 0.3);
        let mut b = report("b", 0.2, 0.3, 0.3);
        b.config.dataset = "y".into();
        assert!(matches!(
            paired_deltas(&a, &b),
            Err(Error::ConfigMismatch(_))
        ));
        assert!(matches!(
            reference_normalized(&a, &b),
            Err(Error::ConfigMismatch(_))
        ));
    }

    #[test]
    fn frontier_through_exact_pool() {
        let pool: Vec<RobustnessReport> = [0.1, 0.2, 0.4]
            .iter()
            .map(|&c| report(&format!("m{c}"), c, 1.1 * c, 1.1 * c))
            .collect();
        let refs: Vec<&RobustnessReport> = pool.iter().collect();
        let fit = effective_robustness(&refs).unwrap();
        assert!((fit.b - 1.0).abs() < 1e-12);
        assert!((fit.a - 1.1f64.ln()).abs() < 1e-12);
        assert!(fit.models.iter().all(|(_, rho)| rho.abs() < 1e-12));
    }

    #[test]
    fn below_frontier_is_positive() {
        let pool = [
            report("a", 0.1, 0.2, 0.2),
            report("b", 0.2, 0.3, 0.3),
            report("c", 0.4, 0.5, 0.5),
        ];
        let refs: Vec<&RobustnessReport> = pool.iter().collect();
        let fit = effective_robustness(&refs).unwrap();
        // the middle model sits below a convex-in-log pool's frontier
        let b = fit.models.iter().find(|(id, _)| id == "b").unwrap().1;
        let predicted = (fit.a + fit.b * 0.2f64.ln()).exp();
        assert_eq!(b > 0.0, predicted > 0.3);
    }

    #[test]
    fn degenerate_pool_rejected() {
        let pool = [report("a", 0.1, 0.2, 0.2), report("b", 0.1, 0.3, 0.3)];
        let refs: Vec<&RobustnessReport> = pool.iter().collect();
        assert!(matches!(
            effective_robustness(&refs),
            Err(Error::FitUndefined(_))
        ));
    }
}
