//! Segmentation agreement metrics (Rand index, Hausdorff, F1, annotation
//! error) and reconstruction MSE split by mask class.

use serde::{Deserialize, Serialize};

use crate::datagen::MaskClass;
use crate::error::{Error, Result};
use crate::segmentation::Segmentation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegMetrics {
    /// Fraction of observation pairs whose same-segment relation agrees.
    pub rand_index: f64,
    /// Max over both directed max-min changepoint distances; `None` when
    /// either side has no changepoints (the comparison is undefined).
    pub hausdorff: Option<f64>,
    pub f1_score: f64,
    /// Signed count discrepancy: predicted − true.
    pub annotation_error: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconMetrics {
    /// Mean squared error over every point with a prediction.
    pub total_mse: Option<f64>,
    /// Over interpolation-heldout points only.
    pub interp_mse: Option<f64>,
    /// Over extrapolation-heldout points only.
    pub extrap_mse: Option<f64>,
}

fn choose2(k: usize) -> u128 {
    if k < 2 {
        0
    } else {
        (k as u128) * (k as u128 - 1) / 2
    }
}

/// Rand index via segment-overlap counting: with T = C(n,2) total pairs,
/// agreements = T − samePairs(A) − samePairs(B) + 2·samePairs(A ∩ B).
pub fn rand_index(truth: &Segmentation, pred: &Segmentation, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid("rand index needs n >= 2 observations"));
    }
    let seg_a = truth.segments(n);
    let seg_b = pred.segments(n);
    let total = choose2(n);
    let same_a: u128 = seg_a.iter().map(|&(s, e)| choose2(e - s + 1)).sum();
    let same_b: u128 = seg_b.iter().map(|&(s, e)| choose2(e - s + 1)).sum();
    let mut same_both: u128 = 0;
    for &(sa, ea) in &seg_a {
        for &(sb, eb) in &seg_b {
            let lo = sa.max(sb);
            let hi = ea.min(eb);
            if hi >= lo {
                same_both += choose2(hi - lo + 1);
            }
        }
    }
    let agree = total + 2 * same_both - same_a - same_b;
    Ok(agree as f64 / total as f64)
}

/// O(n²) membership-pair enumeration; the independent oracle for
/// [`rand_index`].
pub fn rand_index_pairwise(truth: &Segmentation, pred: &Segmentation, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid("rand index needs n >= 2 observations"));
    }
    let mut agree = 0u128;
    let mut total = 0u128;
    for i in 0..n {
        for j in (i + 1)..n {
            let a = truth.segment_of(i) == truth.segment_of(j);
            let b = pred.segment_of(i) == pred.segment_of(j);
            if a == b {
                agree += 1;
            }
            total += 1;
        }
    }
    Ok(agree as f64 / total as f64)
}

fn directed_hausdorff(from: &[usize], to: &[usize]) -> f64 {
    from.iter()
        .map(|&f| {
            to.iter()
                .map(|&t| (f as f64 - t as f64).abs())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Worst-case changepoint distance in index units. `None` when either set is
/// empty (zero-changepoint trajectories are excluded from this metric).
pub fn hausdorff(truth_cps: &[usize], pred_cps: &[usize]) -> Option<f64> {
    if truth_cps.is_empty() || pred_cps.is_empty() {
        return None;
    }
    Some(directed_hausdorff(truth_cps, pred_cps).max(directed_hausdorff(pred_cps, truth_cps)))
}

/// Greedy nearest-first one-to-one matching within `tolerance` indices;
/// F1 = harmonic mean of precision and recall. Both sets empty → 1, exactly
/// one empty → 0.
pub fn f1_score(truth_cps: &[usize], pred_cps: &[usize], tolerance: usize) -> f64 {
    match (truth_cps.is_empty(), pred_cps.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new(); // (distance, pred idx, truth idx)
    for (pi, &p) in pred_cps.iter().enumerate() {
        for (ti, &t) in truth_cps.iter().enumerate() {
            let d = p.abs_diff(t);
            if d <= tolerance {
                pairs.push((d, pi, ti));
            }
        }
    }
    pairs.sort_unstable();
    let mut pred_used = vec![false; pred_cps.len()];
    let mut truth_used = vec![false; truth_cps.len()];
    let mut matched = 0usize;
    for (_, pi, ti) in pairs {
        if !pred_used[pi] && !truth_used[ti] {
            pred_used[pi] = true;
            truth_used[ti] = true;
            matched += 1;
        }
    }
    if matched == 0 {
        return 0.0;
    }
    let precision = matched as f64 / pred_cps.len() as f64;
    let recall = matched as f64 / truth_cps.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Signed changepoint-count discrepancy: predicted − true.
pub fn annotation_error(truth_cps: &[usize], pred_cps: &[usize]) -> i64 {
    pred_cps.len() as i64 - truth_cps.len() as i64
}

/// All segmentation metrics at once (default F1 tolerance is 10 indices).
pub fn seg_metrics(
    truth: &Segmentation,
    pred: &Segmentation,
    n: usize,
    f1_tolerance: usize,
) -> Result<SegMetrics> {
    Ok(SegMetrics {
        rand_index: rand_index(truth, pred, n)?,
        hausdorff: hausdorff(truth.changepoints(), pred.changepoints()),
        f1_score: f1_score(truth.changepoints(), pred.changepoints(), f1_tolerance),
        annotation_error: annotation_error(truth.changepoints(), pred.changepoints()),
    })
}

/// Mean squared error split by mask class. Predictions may be absent at
/// visible points (excluded from the total); a missing prediction at any
/// heldout point is an error.
pub fn mse_split(
    truth_values: &[Vec<f64>],
    predictions: &[Option<Vec<f64>>],
    mask: &[MaskClass],
) -> Result<ReconMetrics> {
    if truth_values.len() != predictions.len() || truth_values.len() != mask.len() {
        return Err(Error::invalid("values, predictions and mask lengths must agree"));
    }
    let mut acc: [(f64, usize); 3] = [(0.0, 0); 3]; // total, interp, extrap
    for i in 0..truth_values.len() {
        let pred = match &predictions[i] {
            Some(p) => p,
            None => {
                if mask[i] != MaskClass::Visible {
                    return Err(Error::invalid(format!(
                        "missing prediction at heldout point {i}"
                    )));
                }
                continue;
            }
        };
        if pred.len() != truth_values[i].len() {
            return Err(Error::invalid(format!("prediction dimension mismatch at point {i}")));
        }
        let se: f64 = truth_values[i]
            .iter()
            .zip(pred)
            .map(|(t, p)| (t - p) * (t - p))
            .sum::<f64>()
            / pred.len() as f64;
        acc[0].0 += se;
        acc[0].1 += 1;
        match mask[i] {
            MaskClass::InterpHeldout => {
                acc[1].0 += se;
                acc[1].1 += 1;
            }
            MaskClass::ExtrapHeldout => {
                acc[2].0 += se;
                acc[2].1 += 1;
            }
            MaskClass::Visible => {}
        }
    }
    let mean = |(sum, count): (f64, usize)| if count > 0 { Some(sum / count as f64) } else { None };
    Ok(ReconMetrics {
        total_mse: mean(acc[0]),
        interp_mse: mean(acc[1]),
        extrap_mse: mean(acc[2]),
    })
}
