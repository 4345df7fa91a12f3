//! Brute-force reference implementations of the anomaly metrics.

/// Maximal runs of `true` as inclusive `(start, end)` pairs, found by direct scan.
fn runs(labels: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        if labels[i] {
            let start = i;
            while i + 1 < labels.len() && labels[i + 1] {
                i += 1;
            }
            out.push((start, i));
        }
        i += 1;
    }
    out
}

/// Tries every observed score as a threshold, applies point adjustment to the
/// flags, and counts the confusion matrix point by point.
pub fn brute_adjusted_best_f1(scores: &[f64], labels: &[bool]) -> f64 {
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return 0.0;
    }
    let mut best = 0.0f64;
    for &theta in scores {
        let mut flags: Vec<bool> = scores.iter().map(|&s| s >= theta).collect();
        for (a, b) in runs(labels) {
            if flags[a..=b].iter().any(|&f| f) {
                flags[a..=b].iter_mut().for_each(|f| *f = true);
            }
        }
        let tp = flags.iter().zip(labels).filter(|(&f, &l)| f && l).count();
        let fp = flags.iter().zip(labels).filter(|(&f, &l)| f && !l).count();
        let fn_ = positives - tp;
        if tp > 0 {
            best = best.max(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64);
        }
    }
    best
}

/// Soft label at each timestep: 1 on anomalies, otherwise the linear ramp
/// `1 − d/(width+1)` at distance `d ≤ width` from the nearest anomaly, else 0.
pub fn brute_soft_labels(labels: &[bool], width: usize) -> Vec<f64> {
    (0..labels.len())
        .map(|t| {
            if labels[t] {
                return 1.0;
            }
            let nearest = (0..labels.len()).filter(|&u| labels[u]).map(|u| u.abs_diff(t)).min();
            match nearest {
                Some(d) if d <= width => 1.0 - d as f64 / (width + 1) as f64,
                _ => 0.0,
            }
        })
        .collect()
}

/// Pairwise AUC: each anomaly against each timestep, weighted by its negative mass `1 − soft`.
pub fn brute_buffered_auc(scores: &[f64], labels: &[bool], width: usize) -> Option<f64> {
    let soft = brute_soft_labels(labels, width);
    let (mut num, mut den) = (0.0, 0.0);
    for i in (0..scores.len()).filter(|&i| labels[i]) {
        for j in 0..scores.len() {
            let w = 1.0 - soft[j];
            den += w;
            num += w * if scores[i] > scores[j] {
                1.0
            } else if scores[i] == scores[j] {
                0.5
            } else {
                0.0
            };
        }
    }
    (den > 0.0).then(|| num / den)
}

pub fn brute_vus_roc(scores: &[f64], labels: &[bool], max_buffer: usize) -> Option<f64> {
    let mut total = 0.0;
    for w in 0..=max_buffer {
        total += brute_buffered_auc(scores, labels, w)?;
    }
    Some(total / (max_buffer + 1) as f64)
}
