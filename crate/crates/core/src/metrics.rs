//! Scalar metrics and statistics used to score and order embedding models:
//! accuracy, ROC AUC, equal error rate, equivalent d′, Kendall's tau-b and
//! the dependent (paired) t-test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

fn check_binary(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            context: "scored examples",
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("scores contain NaN".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass(usize::from(pos > 0) + usize::from(neg > 0)));
    }
    Ok((pos, neg))
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

/// `P(score_pos > score_neg) + ½·P(tie)`, computed exactly from midranks.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_binary(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j share their midrank
        let midrank = (i + 1 + j) as f64 / 2.0;
        let tied_pos = order[i..j].iter().filter(|&&k| labels[k]).count();
        rank_sum += midrank * tied_pos as f64;
        i = j;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Macro one-vs-rest AUC over a per-example class-score matrix. With two
/// classes this is the AUC of the class-1 score. Classes missing from either
/// side of a split are skipped.
pub fn macro_ovr_auc(scores: &[Vec<f64>], labels: &[usize], num_classes: usize) -> Result<f64> {
    if num_classes < 2 {
        return Err(Error::SingleClass(num_classes));
    }
    let column = |k: usize| scores.iter().map(|row| row[k]).collect::<Vec<_>>();
    if num_classes == 2 {
        let is_pos: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
        return roc_auc(&column(1), &is_pos);
    }
    let mut aucs = Vec::with_capacity(num_classes);
    for k in 0..num_classes {
        let is_pos: Vec<bool> = labels.iter().map(|&l| l == k).collect();
        match roc_auc(&column(k), &is_pos) {
            Ok(a) => aucs.push(a),
            Err(Error::SingleClass(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    if aucs.is_empty() {
        return Err(Error::SingleClass(1));
    }
    Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
}

/// Linearly interpolated crossing of the false-positive and false-negative
/// rate curves.
///
/// Operating points are taken at every distinct score threshold (predict
/// positive when `score ≥ threshold`), starting from the reject-all point.
pub fn equal_error_rate(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_binary(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0usize, pos)];
    let (mut fp, mut tp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        points.push((fp, pos - tp));
        i = j;
    }
    Ok(eer_from_counts(&points, pos, neg))
}

/// Shared by the sweep above and by brute-force checks: `points` holds
/// (false positives, false negatives) in threshold-descending order.
#[doc(hidden)]
pub fn eer_from_counts(points: &[(usize, usize)], pos: usize, neg: usize) -> f64 {
    let rate = |(fp, fneg): (usize, usize)| (fp as f64 / neg as f64, fneg as f64 / pos as f64);
    let mut prev = rate(points[0]);
    for &p in &points[1..] {
        let (fpr, fnr) = rate(p);
        if fnr <= fpr {
            let d_prev = prev.1 - prev.0;
            let d_cur = fnr - fpr;
            let t = d_prev / (d_prev - d_cur);
            return prev.0 + t * (fpr - prev.0);
        }
        prev = (fpr, fnr);
    }
    // the accept-all point always satisfies fnr (0) <= fpr (1)
    unreachable!("accept-all operating point missing")
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

// Acklam's rational approximation to the lower half of the normal quantile.
const A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];

fn lower_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p <= 0.5);
    let x = if p < 0.02425 {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    // one Newton step against the erfc-based CDF, which keeps relative
    // precision throughout the lower tail
    x - (normal_cdf(x) - p) / normal_pdf(x)
}

/// Standard normal quantile `Z(p)` for `0 < p < 1`.
///
/// The upper half is evaluated as `−Z(1 − p)`; `1 − p` is exact there.
pub fn normal_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p == 0.5 {
        return 0.0;
    }
    if p < 0.5 {
        lower_quantile(p)
    } else {
        -lower_quantile(1.0 - p)
    }
}

/// Equivalent d-prime, `√2 · Z(auc)`. AUCs of exactly 0 or 1 map to the
/// signed-infinity sentinel; use [`checked_d_prime`] to get a diagnostic.
pub fn d_prime(auc: f64) -> f64 {
    std::f64::consts::SQRT_2 * normal_quantile(auc)
}

pub fn checked_d_prime(auc: f64, context: &str) -> Result<f64> {
    if auc.is_nan() || !(0.0..=1.0).contains(&auc) {
        return Err(Error::InvalidInput(format!("AUC {auc} outside [0, 1]")));
    }
    let d = d_prime(auc);
    if d.is_infinite() {
        return Err(Error::DegenerateAuc {
            auc,
            sentinel: d,
            context: context.to_string(),
        });
    }
    Ok(d)
}

/// Unweighted mean of per-task d′. Any AUC at 0 or 1 is reported as a
/// [`Error::DegenerateAuc`] naming the task index.
pub fn average_d_prime(aucs: &[f64]) -> Result<f64> {
    if aucs.is_empty() {
        return Err(Error::InvalidInput("no tasks to average".into()));
    }
    let mut total = 0.0;
    for (i, &auc) in aucs.iter().enumerate() {
        total += checked_d_prime(auc, &format!("task {i}"))?;
    }
    Ok(total / aucs.len() as f64)
}

fn tie_pairs(sorted: &[f64]) -> u64 {
    let mut pairs = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as u64;
        pairs += t * (t - 1) / 2;
        i = j;
    }
    pairs
}

/// Counts inversions of `v` while merge-sorting it; equal elements are not
/// inversions.
fn count_swaps(v: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mut right = v.split_off(n / 2);
    let mut swaps = count_swaps(v) + count_swaps(&mut right);
    let left = std::mem::take(v);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, 0);
    while i < left.len() && j < right.len() {
        if left[i] <= right[j] {
            merged.push(left[i]);
            i += 1;
        } else {
            merged.push(right[j]);
            swaps += (left.len() - i) as u64;
            j += 1;
        }
    }
    merged.extend_from_slice(&left[i..]);
    merged.extend_from_slice(&right[j..]);
    *v = merged;
    swaps
}

/// Combines Kendall pair counts into tau-b.
#[doc(hidden)]
pub fn tau_b_from_counts(n0: u64, ties_a: u64, ties_b: u64, s: i64) -> Result<f64> {
    let (da, db) = (n0 - ties_a, n0 - ties_b);
    if da == 0 || db == 0 {
        return Err(Error::Degenerate(
            "Kendall tau is undefined when one ordering is entirely tied".into(),
        ));
    }
    Ok(s as f64 / ((da as f64) * (db as f64)).sqrt())
}

/// Kendall's tau-b between two score lists over the same items, via Knight's
/// O(n log n) merge-sort algorithm.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            context: "kendall tau",
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InvalidInput("Kendall tau needs at least 2 items".into()));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::InvalidInput("Kendall tau input contains NaN".into()));
    }
    let n = a.len() as u64;
    let n0 = n * (n - 1) / 2;

    let mut idx: Vec<usize> = (0..a.len()).collect();
    idx.sort_by(|&i, &j| a[i].total_cmp(&a[j]).then(b[i].total_cmp(&b[j])));
    let sorted_a: Vec<f64> = idx.iter().map(|&i| a[i]).collect();
    let ties_a = tie_pairs(&sorted_a);

    let mut joint = 0u64;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && a[idx[j]] == a[idx[i]] && b[idx[j]] == b[idx[i]] {
            j += 1;
        }
        let t = (j - i) as u64;
        joint += t * (t - 1) / 2;
        i = j;
    }

    let mut by_b: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
    let discordant = count_swaps(&mut by_b);
    let ties_b = tie_pairs(&by_b);

    let s = n0 as i64 - ties_a as i64 - ties_b as i64 + joint as i64 - 2 * discordant as i64;
    tau_b_from_counts(n0, ties_a, ties_b, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TTestOutcome {
    Regular,
    /// All differences are zero: t = 0, p = 1 by convention.
    NoEffect,
    /// Identical nonzero differences: t = ±∞, p = 0.
    InfiniteT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatTestResult {
    pub t_statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub mean_difference: f64,
    pub outcome: TTestOutcome,
}

/// Dependent-samples t-test on `a[i] − b[i]`, two-sided, n − 1 degrees of
/// freedom.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<StatTestResult> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            context: "paired t-test",
            expected: a.len(),
            actual: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidInput("paired t-test needs n >= 2".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidInput("non-finite paired difference".into()));
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();

    if sd == 0.0 {
        return Ok(if mean == 0.0 {
            StatTestResult {
                t_statistic: 0.0,
                p_value: 1.0,
                n,
                mean_difference: 0.0,
                outcome: TTestOutcome::NoEffect,
            }
        } else {
            StatTestResult {
                t_statistic: f64::INFINITY.copysign(mean),
                p_value: 0.0,
                n,
                mean_difference: mean,
                outcome: TTestOutcome::InfiniteT,
            }
        });
    }
    let t = mean / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(StatTestResult {
        t_statistic: t,
        p_value: p,
        n,
        mean_difference: mean,
        outcome: TTestOutcome::Regular,
    })
}
