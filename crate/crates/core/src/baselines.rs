//! Statistical comparators: gap fillers, simple forecasters, Theta, k-NN
//! anomaly scoring, an RBF support vector machine and PCA.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::scalar::Scalar;

fn observed_points<S: Scalar>(values: &[S], observed: &[bool], min: usize) -> Result<Vec<(usize, f64)>> {
    if values.len() != observed.len() {
        bail!(Dimension, "{} values but {} mask entries", values.len(), observed.len());
    }
    let pts: Vec<(usize, f64)> = observed.iter().enumerate().filter(|(_, &o)| o).map(|(i, _)| (i, values[i].f64())).collect();
    if pts.len() < min {
        bail!(Insufficient, "need at least {min} observed points, got {}", pts.len());
    }
    Ok(pts)
}

/// Fills every gap with `inner(left, right, t)` between its bracketing observed
/// points; edge gaps copy the nearest observed value.
fn fill_between<S: Scalar>(values: &[S], observed: &[bool], pts: &[(usize, f64)], inner: impl Fn(usize, usize, usize) -> f64) -> Vec<S> {
    let mut out = values.to_vec();
    let (first, last) = (pts[0], pts[pts.len() - 1]);
    for t in (0..values.len()).filter(|&t| !observed[t]) {
        let filled = if t < first.0 {
            first.1
        } else if t > last.0 {
            last.1
        } else {
            let r = pts.partition_point(|&(i, _)| i < t);
            inner(r - 1, r, t)
        };
        out[t] = S::of(filled);
    }
    out
}

/// Straight line between the observed neighbours of each gap.
pub fn interp_linear<S: Scalar>(values: &[S], observed: &[bool]) -> Result<Vec<S>> {
    let pts = observed_points(values, observed, 2)?;
    Ok(fill_between(values, observed, &pts, |l, r, t| {
        let ((x0, y0), (x1, y1)) = (pts[l], pts[r]);
        y0 + (y1 - y0) * (t - x0) as f64 / (x1 - x0) as f64
    }))
}

/// Value of the index-nearest observed point; ties go left.
pub fn interp_nearest<S: Scalar>(values: &[S], observed: &[bool]) -> Result<Vec<S>> {
    let pts = observed_points(values, observed, 2)?;
    Ok(fill_between(values, observed, &pts, |l, r, t| {
        let ((x0, y0), (x1, y1)) = (pts[l], pts[r]);
        if t - x0 <= x1 - t {
            y0
        } else {
            y1
        }
    }))
}

/// Second derivatives of the natural cubic spline through `pts` (zero at both ends).
pub fn natural_spline_moments(pts: &[(usize, f64)]) -> Vec<f64> {
    let n = pts.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let h: Vec<f64> = pts.windows(2).map(|w| (w[1].0 - w[0].0) as f64).collect();
    // tridiagonal system for interior moments, solved by forward elimination and back substitution
    let k = n - 2;
    let mut diag = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    for i in 0..k {
        diag[i] = 2.0 * (h[i] + h[i + 1]);
        rhs[i] = 6.0 * ((pts[i + 2].1 - pts[i + 1].1) / h[i + 1] - (pts[i + 1].1 - pts[i].1) / h[i]);
    }
    for i in 1..k {
        let w = h[i] / diag[i - 1];
        diag[i] -= w * h[i];
        rhs[i] -= w * rhs[i - 1];
    }
    m[k] = rhs[k - 1] / diag[k - 1];
    for i in (0..k - 1).rev() {
        m[i + 1] = (rhs[i] - h[i + 1] * m[i + 2]) / diag[i];
    }
    m
}

/// Natural cubic spline through the observed points.
pub fn interp_cubic<S: Scalar>(values: &[S], observed: &[bool]) -> Result<Vec<S>> {
    let pts = observed_points(values, observed, 4)?;
    let m = natural_spline_moments(&pts);
    Ok(fill_between(values, observed, &pts, |l, r, t| {
        let ((x0, y0), (x1, y1)) = (pts[l], pts[r]);
        let h = (x1 - x0) as f64;
        let (a, b) = ((x1 - t) as f64, (t - x0) as f64);
        m[l] * a.powi(3) / (6.0 * h) + m[r] * b.powi(3) / (6.0 * h) + (y0 - m[l] * h * h / 6.0) * a / h + (y1 - m[r] * h * h / 6.0) * b / h
    }))
}

/// Forward fill, with a leading gap taking the first observed value.
pub fn naive_fill<S: Scalar>(values: &[S], observed: &[bool]) -> Result<Vec<S>> {
    let pts = observed_points(values, observed, 1)?;
    let mut last = S::of(pts[0].1);
    Ok(values
        .iter()
        .zip(observed)
        .map(|(&v, &o)| {
            if o {
                last = v;
            }
            last
        })
        .collect())
}

fn need_history<S>(history: &[S], min: usize) -> Result<()> {
    if history.len() < min {
        bail!(Insufficient, "history of {} points, need {min}", history.len());
    }
    Ok(())
}

pub fn naive_forecast<S: Scalar>(history: &[S], horizon: usize) -> Result<Vec<S>> {
    need_history(history, 1)?;
    Ok(vec![history[history.len() - 1]; horizon])
}

/// `ŷ(T+h) = y(T − m + ((h−1) mod m) + 1)`.
pub fn seasonal_naive<S: Scalar>(history: &[S], horizon: usize, season: usize) -> Result<Vec<S>> {
    if season == 0 {
        bail!(Contract, "season must be positive");
    }
    need_history(history, season)?;
    let tail = &history[history.len() - season..];
    Ok((0..horizon).map(|h| tail[h % season]).collect())
}

/// Last value plus `h` times the average step over the history.
pub fn random_walk_drift<S: Scalar>(history: &[S], horizon: usize) -> Result<Vec<S>> {
    need_history(history, 2)?;
    let n = history.len();
    let (first, last) = (history[0].f64(), history[n - 1].f64());
    let slope = (last - first) / (n - 1) as f64;
    Ok((1..=horizon).map(|h| S::of(last + h as f64 * slope)).collect())
}

/// Sample autocorrelation at lags `1..=max_lag`.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let denom: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    (1..=max_lag)
        .map(|k| {
            if denom == 0.0 || k >= n {
                return 0.0;
            }
            (k..n).map(|t| (x[t] - mean) * (x[t - k] - mean)).sum::<f64>() / denom
        })
        .collect()
}

/// Lag-`m` autocorrelation outside the 90% band `1.645·√((1 + 2Σ_{k<m} r_k²)/n)`.
pub fn is_seasonal(x: &[f64], season: usize) -> bool {
    if season < 2 || x.len() < 2 * season {
        return false;
    }
    let r = autocorrelation(x, season);
    let band = 1.645 * ((1.0 + 2.0 * r[..season - 1].iter().map(|v| v * v).sum::<f64>()) / x.len() as f64).sqrt();
    r[season - 1].abs() > band
}

/// Classical multiplicative seasonal indices (length `m`, mean 1) from a centred moving average.
pub fn seasonal_indices(x: &[f64], season: usize) -> Vec<f64> {
    let n = x.len();
    let half = season / 2;
    let mut sums = vec![0.0; season];
    let mut counts = vec![0usize; season];
    for t in half..n.saturating_sub(half) {
        let trend = if season % 2 == 0 {
            if t + half >= n {
                continue;
            }
            (0.5 * x[t - half] + x[t - half + 1..t + half].iter().sum::<f64>() + 0.5 * x[t + half]) / season as f64
        } else {
            x[t - half..=t + half].iter().sum::<f64>() / season as f64
        };
        sums[t % season] += x[t] / trend;
        counts[t % season] += 1;
    }
    let raw: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| if c > 0 { s / c as f64 } else { 1.0 }).collect();
    let mean = raw.iter().sum::<f64>() / season as f64;
    raw.into_iter().map(|v| v / mean).collect()
}

/// In-sample SSE of one-step simple exponential smoothing started at `x[0]`,
/// together with the final level.
pub fn ses_sse(x: &[f64], alpha: f64) -> (f64, f64) {
    let mut level = x[0];
    let mut sse = 0.0;
    for &v in &x[1..] {
        sse += (v - level).powi(2);
        level += alpha * (v - level);
    }
    (sse, level)
}

/// Smoothing constant from `{0.01, 0.02, …, 0.99}` with the smallest in-sample SSE (first on ties).
pub fn ses_alpha_grid(x: &[f64]) -> f64 {
    let mut best = (f64::INFINITY, 0.01);
    for i in 1..=99 {
        let alpha = i as f64 / 100.0;
        let (sse, _) = ses_sse(x, alpha);
        if sse < best.0 {
            best = (sse, alpha);
        }
    }
    best.1
}

/// Least-squares line `a + b·t` over `t = 0..n`.
pub fn linear_trend(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let x_mean = x.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (t, &v) in x.iter().enumerate() {
        num += (t as f64 - t_mean) * (v - x_mean);
        den += (t as f64 - t_mean).powi(2);
    }
    let b = if den > 0.0 { num / den } else { 0.0 };
    (x_mean - b * t_mean, b)
}

/// θ = (0, 2) Theta method: the mean of the extrapolated least-squares line
/// and the SES forecast of the θ=2 line `2y − trend`.
///
/// With `season > 1`, strictly positive data and a significant lag-`season`
/// autocorrelation, the series is seasonally adjusted first and the forecast
/// re-seasonalized.
pub fn theta_forecast<S: Scalar>(history: &[S], horizon: usize, season: usize) -> Result<Vec<S>> {
    need_history(history, 3)?;
    let mut x: Vec<f64> = history.iter().map(|v| v.f64()).collect();
    let n = x.len();
    let indices = (season > 1 && x.iter().all(|&v| v > 0.0) && is_seasonal(&x, season)).then(|| seasonal_indices(&x, season));
    if let Some(idx) = &indices {
        for (t, v) in x.iter_mut().enumerate() {
            *v /= idx[t % season];
        }
    }
    let (a, b) = linear_trend(&x);
    let theta2: Vec<f64> = x.iter().enumerate().map(|(t, &v)| 2.0 * v - (a + b * t as f64)).collect();
    let alpha = ses_alpha_grid(&theta2);
    let (_, level) = ses_sse(&theta2, alpha);
    Ok((1..=horizon)
        .map(|h| {
            let t = n - 1 + h;
            let mut f = 0.5 * (a + b * t as f64) + 0.5 * level;
            if let Some(idx) = &indices {
                f *= idx[t % season];
            }
            S::of(f)
        })
        .collect())
}

/// Sliding-window k-NN distance scores pooled back to timesteps by maximum.
///
/// Each length-`window` window (stride 1) is scored by its Euclidean distance
/// to the k-th nearest other window, with `k` clamped to the number of other windows.
pub fn knn_anomaly<S: Scalar>(values: &[S], window: usize, k: usize) -> Result<Vec<f64>> {
    if window == 0 || values.len() < window + 1 {
        bail!(Insufficient, "series of {} points is too short for windows of {window}", values.len());
    }
    if k == 0 {
        bail!(Contract, "k must be positive");
    }
    let x: Vec<f64> = values.iter().map(|v| v.f64()).collect();
    let count = x.len() - window + 1;
    let k = k.min(count - 1);
    let mut window_score = vec![0.0; count];
    let mut dists = Vec::with_capacity(count - 1);
    for (i, score) in window_score.iter_mut().enumerate() {
        dists.clear();
        for j in (0..count).filter(|&j| j != i) {
            dists.push(x[i..i + window].iter().zip(&x[j..j + window]).map(|(a, b)| (a - b).powi(2)).sum::<f64>());
        }
        dists.select_nth_unstable_by(k - 1, f64::total_cmp);
        *score = dists[k - 1].sqrt();
    }
    let mut out = vec![0.0f64; x.len()];
    for (i, &s) in window_score.iter().enumerate() {
        for o in &mut out[i..i + window] {
            *o = o.max(s);
        }
    }
    Ok(out)
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-gamma * a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).exp()
}

/// `1 / (d · var(X))` over every entry of `X`; 1 when the data are constant.
pub fn default_gamma(x: &[Vec<f64>]) -> f64 {
    let d = x.first().map_or(1, Vec::len);
    let all: Vec<f64> = x.iter().flatten().copied().collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64;
    if var > 0.0 {
        1.0 / (d as f64 * var)
    } else {
        1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    /// `None` picks [`default_gamma`].
    pub gamma: Option<f64>,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { c: 1.0, gamma: None, tolerance: 1e-3, max_iterations: 10_000_000 }
    }
}

/// One binary machine: `f(x) = Σ coef_i·K(sv_i, x) − rho`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub support: Vec<Vec<f64>>,
    /// `α_i·y_i` per support vector.
    pub coef: Vec<f64>,
    /// Dual variables of the support vectors, each in `[0, C]`.
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl BinarySvm {
    pub fn decision(&self, x: &[f64], gamma: f64) -> f64 {
        self.support.iter().zip(&self.coef).map(|(sv, c)| c * rbf(sv, x, gamma)).sum::<f64>() - self.rho
    }
}

/// One-vs-rest RBF machines, one per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub classes: Vec<usize>,
    pub machines: Vec<BinarySvm>,
    pub gamma: f64,
    pub c: f64,
}

impl SvmModel {
    pub fn converged(&self) -> bool {
        self.machines.iter().all(|m| m.converged)
    }

    /// Margin of every one-vs-rest machine, in `classes` order.
    pub fn decision_values(&self, x: &[f64]) -> Vec<f64> {
        self.machines.iter().map(|m| m.decision(x, self.gamma)).collect()
    }
}

/// Index of the largest value; the first wins ties.
pub fn argmax(values: &[f64]) -> usize {
    values.iter().enumerate().fold(0, |best, (i, &v)| if v > values[best] { i } else { best })
}

/// Sequential minimal optimization with second-order working-set selection.
fn smo(kernel: &DMatrix<f64>, y: &[f64], c: f64, tol: f64, max_iter: usize) -> (Vec<f64>, f64, usize, bool) {
    const TAU: f64 = 1e-12;
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let q = |i: usize, j: usize| y[i] * y[j] * kernel[(i, j)];
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;
    let mut iter = 0;
    let mut converged = false;
    while iter < max_iter {
        let mut g_max = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let cand = if y[t] > 0.0 { (!upper(alpha[t])).then(|| -grad[t]) } else { (!lower(alpha[t])).then(|| grad[t]) };
            if let Some(v) = cand {
                if v >= g_max {
                    g_max = v;
                    i_sel = Some(t);
                }
            }
        }
        let Some(i) = i_sel else {
            converged = true;
            break;
        };
        let mut g_max2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best_obj = f64::INFINITY;
        for t in 0..n {
            let (eligible, g_t, diff) =
                if y[t] > 0.0 { (!lower(alpha[t]), grad[t], g_max + grad[t]) } else { (!upper(alpha[t]), -grad[t], g_max - grad[t]) };
            if !eligible {
                continue;
            }
            g_max2 = g_max2.max(g_t);
            if diff > 0.0 {
                let quad = kernel[(i, i)] + kernel[(t, t)] - 2.0 * y[i] * q(i, t);
                let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                if obj <= best_obj {
                    best_obj = obj;
                    j_sel = Some(t);
                }
            }
        }
        let j = match j_sel {
            Some(j) if g_max + g_max2 >= tol => j,
            _ => {
                converged = true;
                break;
            }
        };
        iter += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = kernel[(i, i)] + kernel[(j, j)] + 2.0 * q(i, j);
            let delta = (-grad[i] - grad[j]) / if quad > 0.0 { quad } else { TAU };
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = kernel[(i, i)] + kernel[(j, j)] - 2.0 * q(i, j);
            let delta = (grad[i] - grad[j]) / if quad > 0.0 { quad } else { TAU };
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (k, g) in grad.iter_mut().enumerate() {
            *g += q(i, k) * di + q(j, k) * dj;
        }
    }

    let (mut ub, mut lb, mut free_sum, mut n_free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg)
            } else {
                lb = lb.max(yg)
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg)
            } else {
                lb = lb.max(yg)
            }
        } else {
            free_sum += yg;
            n_free += 1;
        }
    }
    let rho = if n_free > 0 { free_sum / n_free as f64 } else { (ub + lb) / 2.0 };
    (alpha, rho, iter, converged)
}

/// Fits one-vs-rest RBF machines. Non-convergence within the iteration cap
/// still returns a model; check [`SvmModel::converged`].
pub fn svm_fit(x: &[Vec<f64>], labels: &[usize], params: &SvmParams) -> Result<SvmModel> {
    if x.len() != labels.len() || x.is_empty() {
        bail!(Dimension, "{} samples but {} labels", x.len(), labels.len());
    }
    if !(params.c > 0.0) {
        bail!(Config, "C must be positive, got {}", params.c);
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        bail!(Dimension, "samples differ in dimension");
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        bail!(Insufficient, "SVM needs at least two classes");
    }
    let gamma = params.gamma.unwrap_or_else(|| default_gamma(x));
    let n = x.len();
    let kernel = DMatrix::from_fn(n, n, |i, j| rbf(&x[i], &x[j], gamma));
    let machines = classes
        .iter()
        .map(|&cls| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == cls { 1.0 } else { -1.0 }).collect();
            let (alpha, rho, iterations, converged) = smo(&kernel, &y, params.c, params.tolerance, params.max_iterations);
            let sv: Vec<usize> = (0..n).filter(|&i| alpha[i] > 0.0).collect();
            BinarySvm {
                support: sv.iter().map(|&i| x[i].clone()).collect(),
                coef: sv.iter().map(|&i| alpha[i] * y[i]).collect(),
                alpha: sv.iter().map(|&i| alpha[i]).collect(),
                rho,
                iterations,
                converged,
            }
        })
        .collect();
    Ok(SvmModel { classes, machines, gamma, c: params.c })
}

pub fn svm_predict(model: &SvmModel, x: &[Vec<f64>]) -> Vec<usize> {
    x.iter().map(|r| model.classes[argmax(&model.decision_values(r))]).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k` orthonormal rows of length `d`, by decreasing variance.
    pub components: Vec<Vec<f64>>,
    /// Fraction of total variance along each component.
    pub explained: Vec<f64>,
}

/// Top-`k` eigenvectors of the sample covariance. Each component's sign is
/// fixed so its largest-magnitude entry is positive.
pub fn pca_fit(x: &[Vec<f64>], k: usize) -> Result<PcaModel> {
    if x.len() < 2 {
        bail!(Insufficient, "PCA needs at least 2 samples, got {}", x.len());
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        bail!(Dimension, "samples differ in dimension");
    }
    if k == 0 || k > d {
        bail!(Dimension, "cannot keep {k} components of {d}-dimensional data");
    }
    let n = x.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let centered = DMatrix::from_fn(x.len(), d, |i, j| x[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let components = order[..k]
        .iter()
        .map(|&c| {
            let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
            let pivot = v.iter().copied().fold(0.0f64, |m, e| if e.abs() > m.abs() { e } else { m });
            if pivot < 0.0 {
                v.iter_mut().for_each(|e| *e = -*e);
            }
            v
        })
        .collect();
    let explained = order[..k].iter().map(|&c| if total > 0.0 { eig.eigenvalues[c].max(0.0) / total } else { 0.0 }).collect();
    Ok(PcaModel { mean, components, explained })
}

pub fn pca_project(model: &PcaModel, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|r| model.components.iter().map(|c| c.iter().zip(r).zip(&model.mean).map(|((w, v), m)| w * (v - m)).sum()).collect())
        .collect()
}

/// Maps projections back to the input space.
pub fn pca_reconstruct(model: &PcaModel, z: &[Vec<f64>]) -> Vec<Vec<f64>> {
    z.iter()
        .map(|coords| {
            let mut out = model.mean.clone();
            for (c, &w) in model.components.iter().zip(coords) {
                for (o, &e) in out.iter_mut().zip(c) {
                    *o += w * e;
                }
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests;
