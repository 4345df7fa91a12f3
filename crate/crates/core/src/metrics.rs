//! Forecasting, classification and anomaly-detection metrics.

use crate::error::{bail, Result};
use crate::scalar::Scalar;

/// Default largest buffer width for [`vus_roc`].
pub const VUS_BUFFER: usize = 4;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        bail!(Dimension, "length mismatch: {a} vs {b}");
    }
    if a == 0 {
        bail!(Insufficient, "metric of an empty vector");
    }
    Ok(())
}

pub fn mse<S: Scalar>(y: &[S], y_hat: &[S]) -> Result<f64> {
    check_lengths(y.len(), y_hat.len())?;
    Ok(y.iter().zip(y_hat).map(|(&a, &b)| (a.f64() - b.f64()).powi(2)).sum::<f64>() / y.len() as f64)
}

pub fn mae<S: Scalar>(y: &[S], y_hat: &[S]) -> Result<f64> {
    check_lengths(y.len(), y_hat.len())?;
    Ok(y.iter().zip(y_hat).map(|(&a, &b)| (a.f64() - b.f64()).abs()).sum::<f64>() / y.len() as f64)
}

/// M4-style symmetric MAPE in percent, `(200/h)·Σ|y−ŷ|/(|y|+|ŷ|)`.
/// Terms whose denominator is zero contribute nothing.
pub fn smape_m4<S: Scalar>(y: &[S], y_hat: &[S]) -> Result<f64> {
    check_lengths(y.len(), y_hat.len())?;
    let total: f64 = y
        .iter()
        .zip(y_hat)
        .map(|(&a, &b)| {
            let (a, b) = (a.f64(), b.f64());
            let denom = a.abs() + b.abs();
            if denom == 0.0 {
                0.0
            } else {
                (a - b).abs() / denom
            }
        })
        .sum();
    Ok(200.0 * total / y.len() as f64)
}

pub fn accuracy<T: PartialEq>(pred: &[T], truth: &[T]) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    Ok(pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64)
}

/// Anomaly scores paired with binary ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredSeries {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl ScoredSeries {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        check_lengths(scores.len(), labels.len())?;
        if scores.iter().any(|s| s.is_nan()) {
            bail!(Contract, "anomaly scores contain NaN");
        }
        Ok(Self { scores, labels })
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    /// Maximal runs of positive labels as inclusive `(start, end)` pairs.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        label_segments(&self.labels)
    }
}

pub fn label_segments(labels: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &l) in labels.iter().enumerate() {
        match (l, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, labels.len() - 1));
    }
    out
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

fn distinct_desc(scores: &[f64]) -> Vec<f64> {
    let mut t = scores.to_vec();
    t.sort_by(|a, b| b.total_cmp(a));
    t.dedup();
    t
}

/// Best F1 over every distinct score threshold (`score ≥ θ` flags a point), where a
/// true segment counts as fully detected once any of its points is flagged.
/// Returns 0 when there are no positive labels.
pub fn adjusted_best_f1(s: &ScoredSeries) -> f64 {
    let positives = s.n_positive();
    if positives == 0 {
        return 0.0;
    }
    // A segment is detected exactly when θ ≤ its maximum score, so sweeping
    // thresholds downward only ever adds whole segments or single false positives.
    let mut events: Vec<(f64, usize, usize)> = s
        .segments()
        .into_iter()
        .map(|(a, b)| {
            let top = s.scores[a..=b].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (top, b - a + 1, 0)
        })
        .collect();
    events.extend(s.scores.iter().zip(&s.labels).filter(|(_, &l)| !l).map(|(&sc, _)| (sc, 0, 1)));
    events.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (mut tp, mut fp, mut best) = (0usize, 0usize, 0f64);
    let mut i = 0;
    while i < events.len() {
        let theta = events[i].0;
        while i < events.len() && events[i].0 == theta {
            tp += events[i].1;
            fp += events[i].2;
            i += 1;
        }
        best = best.max(f1(tp, fp, positives - tp));
    }
    best
}

/// Best F1 over thresholds without point adjustment.
pub fn best_f1(s: &ScoredSeries) -> f64 {
    let positives = s.n_positive();
    if positives == 0 {
        return 0.0;
    }
    distinct_desc(&s.scores)
        .into_iter()
        .map(|theta| {
            let (mut tp, mut fp) = (0, 0);
            for (&sc, &l) in s.scores.iter().zip(&s.labels) {
                if sc >= theta {
                    if l {
                        tp += 1
                    } else {
                        fp += 1
                    }
                }
            }
            f1(tp, fp, positives - tp)
        })
        .fold(0.0, f64::max)
}

/// AUC where every timestep with a positive label is a positive and every
/// timestep contributes `negative_weight[t]` of negative mass. Ties count ½.
fn weighted_auc(scores: &[f64], positive: &[bool], negative_weight: &[f64]) -> Result<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let neg_mass: f64 = negative_weight.iter().sum();
    if n_pos == 0 || neg_mass <= 0.0 {
        bail!(UndefinedMetric, "ROC-AUC needs both classes");
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut below, mut numer, mut i) = (0f64, 0f64, 0);
    while i < order.len() {
        let s = scores[order[i]];
        let (mut pos_here, mut neg_here) = (0usize, 0f64);
        while i < order.len() && scores[order[i]] == s {
            let t = order[i];
            if positive[t] {
                pos_here += 1;
            }
            neg_here += negative_weight[t];
            i += 1;
        }
        numer += pos_here as f64 * (below + 0.5 * neg_here);
        below += neg_here;
    }
    Ok(numer / (n_pos as f64 * neg_mass))
}

/// Probability that a random positive outranks a random negative (ties ½).
pub fn roc_auc(s: &ScoredSeries) -> Result<f64> {
    let neg: Vec<f64> = s.labels.iter().map(|&l| if l { 0.0 } else { 1.0 }).collect();
    weighted_auc(&s.scores, &s.labels, &neg)
}

/// Soft labels: 1 inside anomaly segments, `1 − k/(width+1)` at distance `k ≤ width`
/// outside a segment (maximum over overlapping ramps), 0 elsewhere.
pub fn soften_labels(labels: &[bool], width: usize) -> Vec<f64> {
    let n = labels.len();
    let mut soft: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    for (a, b) in label_segments(labels) {
        for k in 1..=width {
            let w = 1.0 - k as f64 / (width + 1) as f64;
            if a >= k {
                soft[a - k] = soft[a - k].max(w);
            }
            if b + k < n {
                soft[b + k] = soft[b + k].max(w);
            }
        }
    }
    soft
}

/// Mean over buffer widths `0..=max_buffer` of the buffered ROC-AUC.
///
/// At width ℓ, timesteps near a true segment are softened with a linear ramp
/// and count as negatives only to the extent `1 − soft label`, so flags close
/// to a segment boundary are penalized less than distant false alarms. Width 0
/// is exactly [`roc_auc`].
pub fn vus_roc(s: &ScoredSeries, max_buffer: usize) -> Result<f64> {
    let mut total = 0.0;
    for width in 0..=max_buffer {
        total += buffered_auc(s, width)?;
    }
    Ok(total / (max_buffer + 1) as f64)
}

/// ROC-AUC at a single buffer width.
pub fn buffered_auc(s: &ScoredSeries, width: usize) -> Result<f64> {
    let neg: Vec<f64> = soften_labels(&s.labels, width).into_iter().map(|y| 1.0 - y).collect();
    weighted_auc(&s.scores, &s.labels, &neg)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    fn scored(scores: &[f64], labels: &[u8]) -> ScoredSeries {
        ScoredSeries::new(scores.to_vec(), labels.iter().map(|&l| l == 1).collect()).unwrap()
    }

    #[test]
    fn regression_errors() {
        let y = [1.0f64, -2.0, 3.5];
        assert_eq!(mse(&y, &y).unwrap(), 0.0);
        assert_eq!(mae(&y, &y).unwrap(), 0.0);
        assert_eq!(mse(&[0.0f64, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(mae(&[0.0f64, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert!(mse(&[0.0f64], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn smape_examples() {
        assert_eq!(smape_m4(&[3.0f64, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        // 100·(10/210 + 10/390)
        assert_abs_diff_eq!(smape_m4(&[100.0f64, 200.0], &[110.0, 190.0]).unwrap(), 7.326, epsilon = 1e-3);
        assert_eq!(smape_m4(&[1.0f64], &[-1.0]).unwrap(), 200.0);
        assert_eq!(smape_m4(&[0.0f64, 1.0], &[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 1], &[2, 2]).unwrap(), 0.0);
        assert_abs_diff_eq!(accuracy(&[1, 2, 2], &[1, 2, 3]).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn adjusted_f1_examples() {
        assert_eq!(adjusted_best_f1(&scored(&[0.2, 0.9, 0.1, 0.3, 0.0], &[0, 1, 1, 0, 0])), 1.0);
        assert_eq!(adjusted_best_f1(&scored(&[0.0, 1.0, 1.0, 0.0], &[0, 1, 1, 0])), 1.0);
        assert_eq!(adjusted_best_f1(&scored(&[0.5, 0.2], &[0, 0])), 0.0);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&scored(&[0.1, 0.9], &[0, 1])).unwrap(), 1.0);
        assert_eq!(roc_auc(&scored(&[0.1, 0.9], &[1, 0])).unwrap(), 0.0);
        assert_eq!(roc_auc(&scored(&[0.5, 0.5], &[1, 0])).unwrap(), 0.5);
        assert!(roc_auc(&scored(&[0.1, 0.9], &[1, 1])).is_err());
    }

    #[test]
    fn vus_examples() {
        let s = scored(&[0.3, 0.1, 0.8, 0.7, 0.2, 0.9, 0.4], &[0, 0, 1, 1, 0, 0, 0]);
        assert_eq!(vus_roc(&s, 0).unwrap(), roc_auc(&s).unwrap());
        let perfect = scored(&[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0], &[0, 0, 1, 1, 0, 0, 0, 1]);
        for l in 0..5 {
            assert_abs_diff_eq!(vus_roc(&perfect, l).unwrap(), 1.0, epsilon = 1e-9);
        }
        assert!(vus_roc(&scored(&[0.1, 0.2], &[0, 0]), 3).is_err());
    }

    #[test]
    fn softening_ramps() {
        let soft = soften_labels(&[false, false, false, true, false, false], 2);
        for (got, want) in soft.iter().zip([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0, 2.0 / 3.0, 1.0 / 3.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert_eq!(soften_labels(&[true, false], 0), vec![1.0, 0.0]);
    }

    #[test]
    fn near_miss_beats_far_miss_under_buffer() {
        let labels = [0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0];
        let mut near = [0.0; 12];
        near[3] = 1.0;
        let mut far = [0.0; 12];
        far[10] = 1.0;
        let (near, far) = (scored(&near, &labels), scored(&far, &labels));
        assert_eq!(roc_auc(&near).unwrap(), roc_auc(&far).unwrap());
        assert!(vus_roc(&near, 2).unwrap() > vus_roc(&far, 2).unwrap());
    }

    fn pairwise_auc(s: &ScoredSeries) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &li) in s.labels.iter().enumerate() {
            for (j, &lj) in s.labels.iter().enumerate() {
                if li && !lj {
                    den += 1.0;
                    num += match s.scores[i].partial_cmp(&s.scores[j]).unwrap() {
                        std::cmp::Ordering::Greater => 1.0,
                        std::cmp::Ordering::Equal => 0.5,
                        std::cmp::Ordering::Less => 0.0,
                    };
                }
            }
        }
        num / den
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise(raw in prop::collection::vec((0u8..6, any::<bool>()), 2..40)) {
            let s = ScoredSeries::new(raw.iter().map(|&(v, _)| v as f64).collect(), raw.iter().map(|&(_, l)| l).collect()).unwrap();
            prop_assume!(s.n_positive() > 0 && s.n_positive() < s.labels.len());
            prop_assert!((roc_auc(&s).unwrap() - pairwise_auc(&s)).abs() < 1e-12);
        }

        #[test]
        fn auc_complement(raw in prop::collection::vec((-1e3f64..1e3, any::<bool>()), 2..40)) {
            let mut scores: Vec<f64> = raw.iter().map(|&(v, _)| v).collect();
            scores.sort_by(f64::total_cmp);
            scores.dedup();
            prop_assume!(scores.len() == raw.len());
            let s = ScoredSeries::new(raw.iter().map(|&(v, _)| v).collect(), raw.iter().map(|&(_, l)| l).collect()).unwrap();
            prop_assume!(s.n_positive() > 0 && s.n_positive() < s.labels.len());
            let neg = ScoredSeries::new(s.scores.iter().map(|v| -v).collect(), s.labels.clone()).unwrap();
            prop_assert!((roc_auc(&s).unwrap() + roc_auc(&neg).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn adjustment_never_hurts(raw in prop::collection::vec((0u8..8, any::<bool>()), 1..40)) {
            let s = ScoredSeries::new(raw.iter().map(|&(v, _)| v as f64).collect(), raw.iter().map(|&(_, l)| l).collect()).unwrap();
            prop_assert!(adjusted_best_f1(&s) >= best_f1(&s));
        }

        #[test]
        fn pointwise_metrics_permutation_invariant(pairs in prop::collection::vec((0.1f64..100.0, 0.1f64..100.0), 1..30), rot in 0usize..30) {
            let (y, yh): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            let k = rot % y.len();
            let (mut y2, mut yh2) = (y.clone(), yh.clone());
            y2.rotate_left(k);
            yh2.rotate_left(k);
            prop_assert!((mse(&y, &yh).unwrap() - mse(&y2, &yh2).unwrap()).abs() < 1e-9);
            prop_assert!((mae(&y, &yh).unwrap() - mae(&y2, &yh2).unwrap()).abs() < 1e-9);
            prop_assert!((smape_m4(&y, &yh).unwrap() - smape_m4(&y2, &yh2).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn smape_scale_invariant(pairs in prop::collection::vec((0.1f64..100.0, -100.0f64..100.0), 1..30), a in 0.01f64..100.0) {
            let (y, yh): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            let ys: Vec<f64> = y.iter().map(|v| v * a).collect();
            let yhs: Vec<f64> = yh.iter().map(|v| v * a).collect();
            let base = smape_m4(&y, &yh).unwrap();
            prop_assert!((base - smape_m4(&ys, &yhs).unwrap()).abs() < 1e-9);
            prop_assert!((0.0..=200.0).contains(&base));
        }
    }
}
