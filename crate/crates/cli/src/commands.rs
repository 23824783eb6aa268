//! The four subcommands. Each writes its tables plus the resolved config into
//! the output directory.

use std::path::{Path, PathBuf};

use sensorfault::dataset::enumerate_windows;
use sensorfault::forecast::{MethodVariant, SelectorMode};
use sensorfault::rng::{derive_key, tag};
use sensorfault::score::{effective_robustness, paired_deltas, reference_normalized, PairDelta};
use sensorfault::stats::{bootstrap_pairs, spearman};
use sensorfault::{evaluate, ChannelRule, Error, EvalConfig, RobustnessReport, Split};

use crate::config::{RunConfig, Seed};
use crate::pipeline::{fit_winner, Prepared};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SensitivityMode {
    EvalSeed,
    ChannelRule,
    Selector,
}

/// Settings shared by every command.
pub struct Run {
    pub cfg: RunConfig,
    pub workers: usize,
    pub quiet: bool,
}

impl Run {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self.cfg.out.clone().ok_or_else(|| {
            CliError::Config("no output directory: pass --out or set `out`".into())
        })?;
        std::fs::create_dir_all(&dir).map_err(|source| CliError::Output {
            path: dir.clone(),
            source,
        })?;
        Ok(dir)
    }

    fn write(&self, dir: &Path, name: &str, body: &str) -> Result<(), CliError> {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|source| CliError::Output { path, source })
    }

    fn write_config(&self, dir: &Path) -> Result<(), CliError> {
        self.write(dir, "config.toml", &self.cfg.to_toml()?)
    }

    fn base_method(&self) -> MethodVariant {
        self.cfg.method.clone().unwrap_or(MethodVariant::Baseline)
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn csv_table(header: &[&str], rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Config(format!("csv: {e}"));
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(r).map_err(fail)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn summary_line(r: &RobustnessReport) -> String {
    let s = r.summary();
    match &s.worst {
        Some(w) => format!(
            "{}: MSE_c={:.4} D_w={:.4} ({}) MSE_w={:.4} mPC={:.4}",
            r.model, r.mse_clean, w.degradation, w.scenario, w.mse, r.mean_corrupted_mse
        ),
        None => format!("{}: MSE_c={} (degradation undefined)", r.model, r.mse_clean),
    }
}

pub fn validate(run: &Run) -> Result<(), CliError> {
    run.cfg.validate()?;
    let prep = Prepared::load(&run.cfg)?;
    let s = &prep.schema;
    run.say(format!("dataset: {}", run.cfg.dataset.path.display()));
    run.say(format!(
        "N={} m={} m_cont={} targets=[{}]",
        prep.data.rows(),
        s.len(),
        s.m_cont(),
        s.targets()
            .iter()
            .map(|&t| s.names()[t].as_str())
            .collect::<Vec<_>>()
            .join(",")
    ));
    for split in [Split::Train, Split::Val, Split::Test] {
        let rows = prep.bounds.range(split);
        let windows = enumerate_windows(&prep.bounds, split, prep.setting)?;
        run.say(format!(
            "{split}: rows {}..{} windows={}",
            rows.start,
            rows.end,
            windows.len()
        ));
    }
    Ok(())
}

pub fn evaluate_cmd(run: &Run) -> Result<(), CliError> {
    run.cfg.validate()?;
    let out = run.out_dir()?;
    run.write_config(&out)?;
    let prep = Prepared::load(&run.cfg)?;
    let eval = run.cfg.eval_config(run.workers)?;
    let fitted = fit_winner(&run.cfg, &prep, &run.base_method(), run.cfg.selector, &eval)?;
    run.say(format!(
        "selected {} from {} candidate(s)",
        fitted.id,
        fitted.candidates.len()
    ));
    let report = evaluate(fitted.model.as_ref(), &prep.source(Split::Test)?, &eval)?;
    report.write_outputs(&out)?;
    run.say(summary_line(&report));
    report.require_degradation()?;
    Ok(())
}

struct Evaluated {
    label: String,
    report: RobustnessReport,
}

fn evaluate_methods(
    run: &Run,
    prep: &Prepared,
    eval: &EvalConfig,
    selector: SelectorMode,
) -> Result<Vec<Evaluated>, CliError> {
    let test = prep.source(Split::Test)?;
    let methods = std::iter::once(run.base_method()).chain(run.cfg.methods.iter().cloned());
    methods
        .enumerate()
        .map(|(i, m)| {
            let fitted = fit_winner(&run.cfg, prep, &m, selector, eval)?;
            let report = evaluate(fitted.model.as_ref(), &test, eval)?;
            let label = if i == 0 {
                "baseline".to_string()
            } else {
                format!("variant-{i}-{}", m.name())
            };
            run.say(format!("[{label}] {}", summary_line(&report)));
            Ok(Evaluated { label, report })
        })
        .collect()
}

const DELTA_NOTE: &str =
    "# variant minus baseline; negative d_w, mse_c, mse_w, d_mean and mpc favor the variant; \
positive tau favors the variant\n";

fn delta_rows(
    runs: &[Evaluated],
    prefix: &[String],
) -> Result<(Vec<PairDelta>, Vec<Vec<String>>), CliError> {
    let base = &runs[0];
    let mut deltas = Vec::new();
    let mut rows = Vec::new();
    for v in &runs[1..] {
        let d = paired_deltas(&v.report, &base.report)?;
        let mut row = prefix.to_vec();
        row.extend([v.label.clone(), d.variant.clone(), d.baseline.clone()]);
        row.extend([d.d_w, d.mse_c, d.mse_w, d.d_mean, d.mpc, d.tau].map(num));
        rows.push(row);
        deltas.push(d);
    }
    Ok((deltas, rows))
}

const DELTA_HEADER: [&str; 9] = [
    "label", "variant", "baseline", "d_w", "mse_c", "mse_w", "d_mean", "mpc", "tau",
];

pub fn compare(run: &Run) -> Result<(), CliError> {
    run.cfg.validate()?;
    if run.cfg.methods.is_empty() {
        return Err(CliError::Config(
            "compare needs at least one [[methods]] entry".into(),
        ));
    }
    let out = run.out_dir()?;
    run.write_config(&out)?;
    let prep = Prepared::load(&run.cfg)?;
    let eval = run.cfg.eval_config(run.workers)?;
    let mut runs = evaluate_methods(run, &prep, &eval, run.cfg.selector)?;

    let reference = runs[0].report.clone();
    let pool: Vec<&RobustnessReport> = runs.iter().map(|r| &r.report).collect();
    let frontier = effective_robustness(&pool).ok();
    for r in &mut runs[1..] {
        r.report
            .attach_reference(reference_normalized(&r.report, &reference)?);
    }
    for r in &mut runs {
        if let Some(fit) = &frontier {
            r.report.attach_effective_robustness(fit);
        }
        r.report.write_outputs(&out.join(&r.label))?;
    }

    let (deltas, rows) = delta_rows(&runs, &[])?;
    let body = csv_table(&DELTA_HEADER, &rows)?;
    run.write(&out, "deltas.csv", &format!("{DELTA_NOTE}{body}"))?;
    if deltas.len() >= 2 && eval.bootstrap > 0 {
        let seed = derive_key(eval.eval_seed, &[tag::BOOTSTRAP, 1]);
        let intervals = bootstrap_pairs(&deltas, eval.bootstrap, seed, eval.level)?;
        let rows: Vec<Vec<String>> = intervals
            .iter()
            .map(|(name, iv)| {
                vec![
                    name.clone(),
                    num(iv.point),
                    num(iv.lo),
                    num(iv.hi),
                    num(iv.level),
                    iv.replicates.to_string(),
                ]
            })
            .collect();
        let body = csv_table(
            &["statistic", "mean_delta", "lo", "hi", "level", "replicates"],
            &rows,
        )?;
        run.write(&out, "delta_intervals.csv", &format!("{DELTA_NOTE}{body}"))?;
    }
    for d in &deltas {
        run.say(format!(
            "{} vs {}: dD_w={:+.4} dMSE_c={:+.4} tau={:+.4}",
            d.variant, d.baseline, d.d_w, d.mse_c, d.tau
        ));
    }
    Ok(())
}

pub fn sensitivity(run: &Run, mode: SensitivityMode) -> Result<(), CliError> {
    run.cfg.validate()?;
    let out = run.out_dir()?;
    run.write_config(&out)?;
    let prep = Prepared::load(&run.cfg)?;
    let eval = run.cfg.eval_config(run.workers)?;
    match mode {
        SensitivityMode::EvalSeed => eval_seed_sweep(run, &prep, &eval, &out),
        SensitivityMode::ChannelRule => channel_rule_sweep(run, &prep, &eval, &out),
        SensitivityMode::Selector => selector_sweep(run, &prep, &eval, &out),
    }
}

/// Listed seeds, or the run's evaluation seed followed by four derived ones.
fn sweep_seeds(cfg: &RunConfig, eval: &EvalConfig) -> Vec<u64> {
    if !cfg.sensitivity.eval_seeds.is_empty() {
        return cfg.sensitivity.eval_seeds.iter().map(|s| s.0).collect();
    }
    let m = cfg.master_seed.0;
    std::iter::once(eval.eval_seed)
        .chain((1..5).map(|i| derive_key(m, &[tag::EVAL, i])))
        .collect()
}

fn eval_seed_sweep(
    run: &Run,
    prep: &Prepared,
    eval: &EvalConfig,
    out: &Path,
) -> Result<(), CliError> {
    let seeds = sweep_seeds(&run.cfg, eval);
    if seeds.len() < 2 {
        return Err(CliError::Config(
            "eval-seed sensitivity needs at least 2 seeds".into(),
        ));
    }
    let fitted = fit_winner(&run.cfg, prep, &run.base_method(), run.cfg.selector, eval)?;
    let test = prep.source(Split::Test)?;
    let mut reports = Vec::new();
    for &seed in &seeds {
        let cfg = EvalConfig {
            eval_seed: seed,
            bootstrap: 0,
            ..eval.clone()
        };
        let r = evaluate(fitted.model.as_ref(), &test, &cfg)?;
        run.say(format!("seed {}: {}", Seed(seed), summary_line(&r)));
        reports.push(r);
    }
    let cases = reports
        .iter()
        .map(|r| r.require_degradation())
        .collect::<Result<Vec<_>, Error>>()?;

    let rows: Vec<Vec<String>> = seeds
        .iter()
        .zip(&reports)
        .zip(&cases)
        .map(|((&seed, r), (w, m))| {
            vec![
                Seed(seed).to_string(),
                num(r.mse_clean),
                num(w.degradation),
                num(w.mse),
                num(m.degradation),
                num(m.mpc),
                w.scenario.to_string(),
                format!("{:?}", w.scenario.class()),
            ]
        })
        .collect();
    let header = [
        "eval_seed",
        "mse_c",
        "d_w",
        "mse_w",
        "d_mean",
        "mpc",
        "worst_scenario",
        "worst_class",
    ];
    run.write(out, "eval_seed_runs.csv", &csv_table(&header, &rows)?)?;

    let (w0, _) = &cases[0];
    let others = &cases[1..];
    let shift = |f: &dyn Fn(usize) -> f64| {
        let d: Vec<f64> = (1..cases.len()).map(|i| (f(i) - f(0)).abs()).collect();
        (
            d.iter().sum::<f64>() / d.len() as f64,
            d.iter().copied().fold(0.0, f64::max),
        )
    };
    let mut summary = Vec::new();
    for (name, (mean, max)) in [
        ("d_w", shift(&|i| cases[i].0.degradation)),
        ("mse_c", shift(&|i| reports[i].mse_clean)),
        ("mse_w", shift(&|i| cases[i].0.mse)),
    ] {
        summary.push(vec![format!("{name}_mean_abs_shift"), num(mean)]);
        summary.push(vec![format!("{name}_max_abs_shift"), num(max)]);
    }
    let profiles: Vec<Vec<f64>> = reports
        .iter()
        .map(|r| {
            r.scenarios
                .iter()
                .map(|s| s.degradation.unwrap_or(f64::NAN))
                .collect()
        })
        .collect();
    let mut min_rho: Option<f64> = None;
    for i in 0..profiles.len() {
        for j in i + 1..profiles.len() {
            if let Ok(rho) = spearman(&profiles[i], &profiles[j]) {
                min_rho = Some(min_rho.map_or(rho, |m| m.min(rho)));
            }
        }
    }
    summary.push(vec!["spearman_min".into(), opt(min_rho)]);
    let exact = others
        .iter()
        .filter(|(w, _)| w.scenario == w0.scenario)
        .count();
    let class = others
        .iter()
        .filter(|(w, _)| w.scenario.class() == w0.scenario.class())
        .count();
    summary.push(vec![
        "worst_exact_agreement".into(),
        format!("{exact}/{}", others.len()),
    ]);
    summary.push(vec![
        "worst_class_agreement".into(),
        format!("{class}/{}", others.len()),
    ]);
    run.write(
        out,
        "eval_seed_summary.csv",
        &csv_table(&["statistic", "value"], &summary)?,
    )?;
    run.say(format!(
        "reference seed {}: worst {} agreement {exact}/{} exact, {class}/{} class; Spearman min {}",
        Seed(seeds[0]),
        w0.scenario,
        others.len(),
        others.len(),
        opt(min_rho)
    ));
    Ok(())
}

fn channel_rule_sweep(
    run: &Run,
    prep: &Prepared,
    eval: &EvalConfig,
    out: &Path,
) -> Result<(), CliError> {
    let gamma_max = match eval.channel_rule {
        ChannelRule::Coupled { gamma_max } | ChannelRule::FixedFraction { gamma_max, .. } => {
            gamma_max
        }
    };
    let mut rules = vec![ChannelRule::coupled(gamma_max)?];
    for &q in &run.cfg.sensitivity.fractions {
        rules.push(ChannelRule::fixed(gamma_max, q)?);
    }
    let fitted = fit_winner(&run.cfg, prep, &run.base_method(), run.cfg.selector, eval)?;
    let test = prep.source(Split::Test)?;
    let mut rows = Vec::new();
    for rule in rules {
        let cfg = EvalConfig {
            channel_rule: rule,
            bootstrap: 0,
            ..eval.clone()
        };
        let r = evaluate(fitted.model.as_ref(), &test, &cfg)?;
        let s = r.summary();
        let (label, q) = match rule {
            ChannelRule::Coupled { .. } => ("coupled", String::new()),
            ChannelRule::FixedFraction { q, .. } => ("fixed", num(q)),
        };
        run.say(format!("{label} {q}: {}", summary_line(&r)));
        rows.push(vec![
            label.to_string(),
            q,
            num(r.mse_clean),
            opt(s.worst.as_ref().map(|w| w.degradation)),
            opt(s.worst.as_ref().map(|w| w.mse)),
            opt(s.mean_case.as_ref().map(|m| m.degradation)),
            num(r.mean_corrupted_mse),
            s.worst.map(|w| w.scenario.to_string()).unwrap_or_default(),
        ]);
    }
    let header = [
        "rule",
        "q",
        "mse_c",
        "d_w",
        "mse_w",
        "d_mean",
        "mpc",
        "worst_scenario",
    ];
    run.write(out, "channel_rule.csv", &csv_table(&header, &rows)?)
}

fn selector_sweep(
    run: &Run,
    prep: &Prepared,
    eval: &EvalConfig,
    out: &Path,
) -> Result<(), CliError> {
    let mut winners = Vec::new();
    let mut delta_table = Vec::new();
    for selector in [
        SelectorMode::CleanValidation,
        SelectorMode::WorstScenarioPerturbedValidation,
    ] {
        let name = match selector {
            SelectorMode::CleanValidation => "clean-validation",
            SelectorMode::WorstScenarioPerturbedValidation => "worst-scenario-perturbed-validation",
        };
        let cfg = EvalConfig {
            bootstrap: 0,
            ..eval.clone()
        };
        let runs = evaluate_methods(run, prep, &cfg, selector)?;
        for r in &runs {
            let s = r.report.summary();
            winners.push(vec![
                name.to_string(),
                r.label.clone(),
                r.report.model.clone(),
                num(r.report.mse_clean),
                opt(s.worst.as_ref().map(|w| w.degradation)),
                opt(s.worst.as_ref().map(|w| w.mse)),
                s.worst.map(|w| w.scenario.to_string()).unwrap_or_default(),
            ]);
        }
        if runs.len() > 1 {
            delta_table.extend(delta_rows(&runs, &[name.to_string()])?.1);
        }
    }
    let header = [
        "selector",
        "label",
        "winner",
        "mse_c",
        "d_w",
        "mse_w",
        "worst_scenario",
    ];
    run.write(out, "selector_winners.csv", &csv_table(&header, &winners)?)?;
    if !delta_table.is_empty() {
        let mut header = vec!["selector"];
        header.extend(DELTA_HEADER);
        let body = csv_table(&header, &delta_table)?;
        run.write(out, "selector_deltas.csv", &format!("{DELTA_NOTE}{body}"))?;
    }
    Ok(())
}
