//! Percentile bootstrap, rank correlation and log-space least squares.
//!
//! Quantiles use linear interpolation between order statistics: for sorted
//! `x[0..N]` and probability `p`, `h = (N − 1)·p` and the quantile is
//! `x[⌊h⌋] + (h − ⌊h⌋)·(x[⌊h⌋+1] − x[⌊h⌋])`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{tag, Stream};
use crate::score::{PairDelta, RobustnessReport, Summary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub replicates: usize,
}

/// Interpolated quantile of already sorted, non-empty data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let i = h.floor() as usize;
    if i + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    let (a, b) = (sorted[i], sorted[i + 1]);
    a + (h - i as f64) * (b - a)
}

/// Central `level` interval of `samples`.
pub fn percentile_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptyIndexSet(
            "no samples for a percentile interval".into(),
        ));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "interval level {level} outside (0, 1)"
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((
        quantile_sorted(&sorted, tail),
        quantile_sorted(&sorted, 1.0 - tail),
    ))
}

/// Report-level statistics that can be bootstrapped over windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Statistic {
    MseClean,
    WorstDegradation,
    WorstMse,
    MeanDegradation,
    MeanCorruptedMse,
    RelativeCorruptionPerformance,
}

impl Statistic {
    pub const ALL: [Statistic; 6] = [
        Statistic::MseClean,
        Statistic::WorstDegradation,
        Statistic::WorstMse,
        Statistic::MeanDegradation,
        Statistic::MeanCorruptedMse,
        Statistic::RelativeCorruptionPerformance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::MseClean => "mse_c",
            Statistic::WorstDegradation => "d_w",
            Statistic::WorstMse => "mse_w",
            Statistic::MeanDegradation => "d_mean",
            Statistic::MeanCorruptedMse => "mpc",
            Statistic::RelativeCorruptionPerformance => "rpc",
        }
    }

    fn of(self, s: &Summary) -> f64 {
        match self {
            Statistic::MseClean => s.mse_clean,
            Statistic::WorstDegradation => s.worst.map_or(f64::NAN, |w| w.degradation),
            Statistic::WorstMse => s.worst.map_or(f64::NAN, |w| w.mse),
            Statistic::MeanDegradation => s.mean_case.map_or(f64::NAN, |m| m.degradation),
            Statistic::MeanCorruptedMse => s.mpc,
            Statistic::RelativeCorruptionPerformance => s.mean_case.map_or(f64::NAN, |m| m.rpc),
        }
    }
}

fn check_replicates(b: usize) -> Result<()> {
    if b == 0 {
        return Err(Error::InvalidArgument(
            "bootstrap needs at least one replicate".into(),
        ));
    }
    Ok(())
}

fn intervals(
    names: impl Iterator<Item = &'static str>,
    points: &[f64],
    replicates: &[Vec<f64>],
    level: f64,
) -> Result<BTreeMap<String, Interval>> {
    names
        .enumerate()
        .map(|(j, name)| {
            let column: Vec<f64> = replicates.iter().map(|r| r[j]).collect();
            let (lo, hi) = percentile_interval(&column, level)?;
            Ok((
                name.to_string(),
                Interval {
                    point: points[j],
                    lo,
                    hi,
                    level,
                    replicates: replicates.len(),
                },
            ))
        })
        .collect()
}

/// Window-level bootstrap. Each replicate resamples window indices with
/// replacement and applies the same multiset to the clean losses and to every
/// scenario, then recomputes the requested statistics.
pub fn bootstrap_windows(
    report: &RobustnessReport,
    b: usize,
    seed: u64,
    level: f64,
    stats: &[Statistic],
) -> Result<BTreeMap<String, Interval>> {
    check_replicates(b)?;
    let w = &report.windows;
    let k = w.clean.len();
    if k == 0 {
        return Err(Error::EmptyIndexSet(
            "report carries no per-window losses".into(),
        ));
    }
    let scenarios = report.scenario_ids();
    let point = report.summary();
    let points: Vec<f64> = stats.iter().map(|s| s.of(&point)).collect();

    let replicates: Vec<Vec<f64>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut stream = Stream::keyed(seed, &[tag::BOOTSTRAP, r as u64]);
            let idx: Vec<usize> = (0..k).map(|_| stream.below(k as u64) as usize).collect();
            let mean_at = |losses: &[f64]| idx.iter().fold(0.0, |a, &i| a + losses[i]) / k as f64;
            let mses: Vec<f64> = w.perturbed.iter().map(|l| mean_at(l)).collect();
            let s = Summary::compute(mean_at(&w.clean), &scenarios, &mses);
            stats.iter().map(|st| st.of(&s)).collect()
        })
        .collect();
    intervals(stats.iter().map(|s| s.name()), &points, &replicates, level)
}

/// Pair-level bootstrap of mean deltas: each replicate resamples the pairs
/// with replacement.
pub fn bootstrap_pairs(
    deltas: &[PairDelta],
    b: usize,
    seed: u64,
    level: f64,
) -> Result<BTreeMap<String, Interval>> {
    check_replicates(b)?;
    if deltas.is_empty() {
        return Err(Error::EmptyIndexSet("no method-baseline pairs".into()));
    }
    const NAMES: [&str; 6] = ["d_w", "mse_c", "mse_w", "d_mean", "mpc", "tau"];
    let fields = |d: &PairDelta| [d.d_w, d.mse_c, d.mse_w, d.d_mean, d.mpc, d.tau];
    let n = deltas.len();
    let mean_over = |idx: &mut dyn Iterator<Item = usize>| {
        let mut acc = [0.0; 6];
        for i in idx {
            for (a, v) in acc.iter_mut().zip(fields(&deltas[i])) {
                *a += v;
            }
        }
        acc.map(|a| a / n as f64).to_vec()
    };
    let points = mean_over(&mut (0..n));
    let replicates: Vec<Vec<f64>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut stream = Stream::keyed(seed, &[tag::BOOTSTRAP, r as u64]);
            mean_over(&mut (0..n).map(|_| stream.below(n as u64) as usize))
        })
        .collect();
    intervals(NAMES.into_iter(), &points, &replicates, level)
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            out[o] = avg;
        }
        i = j + 1;
    }
    out
}

/// Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument(
            "rank correlation needs at least 2 points".into(),
        ));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::InvalidArgument(
            "rank correlation undefined for constant input".into(),
        ));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Ordinary least squares of `log y` on `log x`, returning `(a, b)` with
/// `log y ≈ a + b·log x`.
pub fn logspace_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::FitUndefined(format!(
            "need at least 2 paired points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::FitUndefined(
            "log-space fit needs positive finite values".into(),
        ));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::FitUndefined("all clean MSEs are equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    Ok((my - b * mx, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hundred_point_interval() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        let (lo, hi) = percentile_interval(&xs, 0.95).unwrap();
        assert!(
            (lo - 3.475).abs() < 1e-12 && (hi - 97.525).abs() < 1e-12,
            "{lo} {hi}"
        );
    }

    #[test]
    fn constant_samples_degenerate() {
        let c = 0.1 + 0.2;
        assert_eq!(percentile_interval(&[c; 17], 0.9).unwrap(), (c, c));
        assert!(percentile_interval(&[], 0.95).is_err());
    }

    #[test]
    fn spearman_examples() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        assert_eq!(spearman(&a, &a).unwrap(), 1.0);
        let rev: Vec<f64> = a.iter().rev().copied().collect();
        assert!((spearman(&a, &rev).unwrap() + 1.0).abs() < 1e-15);
        let swapped = [1.0, 2.0, 4.0, 3.0, 5.0, 6.0, 7.0];
        // 1 − 6·Σd²/(n(n²−1)) with Σd² = 2, n = 7
        let oracle = 1.0 - 6.0 * 2.0 / (7.0 * 48.0);
        assert!((spearman(&a, &swapped).unwrap() - oracle).abs() < 1e-12);
        assert_eq!((oracle * 1000.0).round() / 1000.0, 0.964);
    }

    #[test]
    fn tied_ranks_average() {
        assert_eq!(ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn logspace_examples() {
        let x = [0.5, 1.0, 2.0, 7.0];
        let (a, b) = logspace_fit(&x, &x.map(|v| 2.0 * v)).unwrap();
        assert!((b - 1.0).abs() < 1e-12 && (a - 2f64.ln()).abs() < 1e-12);
        let (a, b) = logspace_fit(&x, &[3.0; 4]).unwrap();
        assert!(b.abs() < 1e-12 && (a - 3f64.ln()).abs() < 1e-12);
        assert!(logspace_fit(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(logspace_fit(&[1.0, -1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn logspace_matches_normal_equations() {
        // closed form via the 2×2 normal equations on (1, log x)
        let x: [f64; 5] = [0.31, 0.47, 0.52, 0.9, 1.4];
        let y: [f64; 5] = [0.4, 0.55, 0.71, 0.95, 1.9];
        let (lx, ly): (Vec<f64>, Vec<f64>) =
            x.iter().zip(&y).map(|(a, b)| (a.ln(), b.ln())).unzip();
        let n = 5.0;
        let (sx, sy) = (lx.iter().sum::<f64>(), ly.iter().sum::<f64>());
        let sxx: f64 = lx.iter().map(|v| v * v).sum();
        let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| a * b).sum();
        let det = n * sxx - sx * sx;
        let b = (n * sxy - sx * sy) / det;
        let a = (sxx * sy - sx * sxy) / det;
        let (fa, fb) = logspace_fit(&x, &y).unwrap();
        assert!((fa - a).abs() < 1e-9 && (fb - b).abs() < 1e-9);
    }

    fn pair(v: f64) -> PairDelta {
        PairDelta {
            baseline: "b".into(),
            variant: "v".into(),
            d_w: v,
            mse_c: v,
            mse_w: v,
            d_mean: v,
            mpc: v,
            tau: -v,
        }
    }

    #[test]
    fn single_pair_is_degenerate() {
        let iv = bootstrap_pairs(&[pair(0.3)], 200, 1, 0.95).unwrap();
        assert_eq!(
            (iv["d_w"].lo, iv["d_w"].hi, iv["d_w"].point),
            (0.3, 0.3, 0.3)
        );
    }

    #[test]
    fn symmetric_pairs_bounded_and_repeatable() {
        let pairs = [pair(-1.0), pair(1.0)];
        let a = bootstrap_pairs(&pairs, 500, 9, 0.95).unwrap();
        assert_eq!(a["d_w"].point, 0.0);
        assert!(a["d_w"].lo >= -1.0 && a["d_w"].hi <= 1.0);
        assert_eq!(a, bootstrap_pairs(&pairs, 500, 9, 0.95).unwrap());
        assert!(bootstrap_pairs(&[], 10, 0, 0.95).is_err());
        assert!(bootstrap_pairs(&pairs, 0, 0, 0.95).is_err());
    }

    proptest! {
        #[test]
        fn interval_ordered(xs in prop::collection::vec(-1e6f64..1e6, 1..60), level in 0.01f64..0.99) {
            let (lo, hi) = percentile_interval(&xs, level).unwrap();
            prop_assert!(lo <= hi);
        }

        #[test]
        fn upper_bound_monotone(xs in prop::collection::vec(-1e3f64..1e3, 1..60), bump in 0.0f64..10.0) {
            let (_, hi) = percentile_interval(&xs, 0.95).unwrap();
            let mut more = xs.clone();
            more.push(hi + bump);
            let (_, hi2) = percentile_interval(&more, 0.95).unwrap();
            prop_assert!(hi2 >= hi);
        }

        #[test]
        fn spearman_monotone_invariant(xs in prop::collection::vec(-50f64..50.0, 3..30), ys in prop::collection::vec(-50f64..50.0, 3..30)) {
            let n = xs.len().min(ys.len());
            let (a, b) = (&xs[..n], &ys[..n]);
            if let Ok(r) = spearman(a, b) {
                let ta: Vec<f64> = a.iter().map(|v| v.exp()).collect();
                let tb: Vec<f64> = b.iter().map(|v| 3.0 * v - 7.0).collect();
                prop_assert!((spearman(&ta, &tb).unwrap() - r).abs() < 1e-12);
            }
        }
    }
}
