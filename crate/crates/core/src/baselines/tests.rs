use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use super::*;

fn mask(v: &[Option<f64>]) -> (Vec<f64>, Vec<bool>) {
    (v.iter().map(|x| x.unwrap_or(0.0)).collect(), v.iter().map(Option::is_some).collect())
}

#[test]
fn linear_and_nearest_examples() {
    let (v, o) = mask(&[Some(0.0), None, Some(2.0)]);
    assert_eq!(interp_linear(&v, &o).unwrap(), vec![0.0, 1.0, 2.0]);
    let (v, o) = mask(&[Some(0.0), None, None, Some(3.0)]);
    assert_eq!(interp_nearest(&v, &o).unwrap(), vec![0.0, 0.0, 3.0, 3.0]);
    let (v, o) = mask(&[Some(0.0), None, Some(4.0)]);
    assert_eq!(interp_nearest(&v, &o).unwrap(), vec![0.0, 0.0, 4.0]);
    let (v, o) = mask(&[None, Some(1.0), Some(3.0), None, None]);
    assert_eq!(interp_linear(&v, &o).unwrap(), vec![1.0, 1.0, 3.0, 3.0, 3.0]);
    let (v, o) = mask(&[None, Some(1.0), None]);
    assert!(interp_linear(&v, &o).is_err());
}

#[test]
fn natural_spline_example() {
    // moments solve [4 1; 1 4]·m = [-12, 12] → m = (-4, 4); S(1.5) = 0.5
    let (v, o) = mask(&[Some(0.0), Some(1.0), None, Some(0.0), Some(1.0)]);
    let unit: Vec<(usize, f64)> = vec![(0, 0.0), (1, 1.0), (2, 0.0), (3, 1.0)];
    let m = natural_spline_moments(&unit);
    assert_abs_diff_eq!(m[1], -4.0, epsilon = 1e-12);
    assert_abs_diff_eq!(m[2], 4.0, epsilon = 1e-12);
    // on a doubled grid the midpoint of (1,1)-(2,0) is sampled exactly
    let (vals, obs): (Vec<f64>, Vec<bool>) = [Some(0.0), None, Some(1.0), None, Some(0.0), None, Some(1.0)]
        .iter()
        .map(|x| (x.unwrap_or(0.0), x.is_some()))
        .unzip();
    let filled = interp_cubic(&vals, &obs).unwrap();
    assert_abs_diff_eq!(filled[3], 0.5, epsilon = 1e-12);
    assert!(interp_cubic(&v[..3], &o[..3]).is_err());
}

#[test]
fn naive_fill_examples() {
    let (v, o) = mask(&[Some(1.0), None, None]);
    assert_eq!(naive_fill(&v, &o).unwrap(), vec![1.0, 1.0, 1.0]);
    let (v, o) = mask(&[None, Some(2.0)]);
    assert_eq!(naive_fill(&v, &o).unwrap(), vec![2.0, 2.0]);
    assert_eq!(naive_fill(&[1.0, 5.0], &[true, true]).unwrap(), vec![1.0, 5.0]);
    assert!(naive_fill(&[1.0], &[false]).is_err());
}

#[test]
fn simple_forecasters() {
    assert_eq!(naive_forecast(&[1.0, 2.0, 3.0], 2).unwrap(), vec![3.0, 3.0]);
    assert_eq!(seasonal_naive(&[1.0, 2.0, 3.0, 4.0], 2, 2).unwrap(), vec![3.0, 4.0]);
    assert_eq!(seasonal_naive(&[1.0, 2.0, 3.0, 4.0], 5, 2).unwrap(), vec![3.0, 4.0, 3.0, 4.0, 3.0]);
    assert_eq!(random_walk_drift(&[1.0, 3.0], 2).unwrap(), vec![5.0, 7.0]);
    assert!(random_walk_drift(&[1.0], 2).is_err());
    assert!(seasonal_naive(&[1.0], 2, 2).is_err());
    assert!(naive_forecast::<f64>(&[], 2).is_err());
}

#[test]
fn theta_constant_and_linear() {
    let c = vec![4.2; 30];
    for v in theta_forecast(&c, 5, 1).unwrap() {
        assert_abs_diff_eq!(v, 4.2, epsilon = 1e-12);
    }
    // on y = 2t the θ=2 line equals the data, so the forecast climbs at half the trend slope
    let lin: Vec<f64> = (0..40).map(|t| 2.0 * t as f64).collect();
    let f = theta_forecast(&lin, 6, 1).unwrap();
    for w in f.windows(2) {
        assert_abs_diff_eq!(w[1] - w[0], 1.0, epsilon = 1e-9);
    }
    let (_, level) = ses_sse(&lin, 0.99);
    assert_abs_diff_eq!(f[0], 0.5 * (2.0 * 40.0) + 0.5 * level, epsilon = 1e-9);
    assert!(theta_forecast(&[1.0, 2.0], 3, 1).is_err());
}

#[test]
fn theta_seasonal_path() {
    let x: Vec<f64> = (0..48).map(|t| 10.0 * [1.2, 0.8, 1.0, 1.0][t % 4]).collect();
    assert!(is_seasonal(&x, 4));
    let idx = seasonal_indices(&x, 4);
    assert_abs_diff_eq!(idx[0], 1.2, epsilon = 1e-9);
    let f = theta_forecast(&x, 4, 4).unwrap();
    for (h, v) in f.iter().enumerate() {
        assert_abs_diff_eq!(*v, 10.0 * [1.2, 0.8, 1.0, 1.0][(48 + h) % 4], epsilon = 1e-6);
    }
}

#[test]
fn alpha_grid_matches_exhaustive_search() {
    let x: Vec<f64> = (0..60).map(|t| ((t as f64) * 0.7).sin() * 3.0 + (t % 7) as f64).collect();
    let mut best = (f64::INFINITY, 0);
    for i in 1..=99 {
        let a = i as f64 / 100.0;
        let mut level = x[0];
        let mut sse = 0.0;
        for &v in &x[1..] {
            sse += (v - level) * (v - level);
            level = a * v + (1.0 - a) * level;
        }
        if sse < best.0 - 1e-12 {
            best = (sse, i);
        }
    }
    assert_eq!((ses_alpha_grid(&x) * 100.0).round() as usize, best.1);
}

#[test]
fn knn_examples() {
    assert_eq!(knn_anomaly(&[1.0; 10], 3, 5).unwrap(), vec![0.0; 10]);
    let s = knn_anomaly(&[0.0, 0.0, 0.0, 0.0, 10.0, 0.0, 0.0, 0.0], 2, 1).unwrap();
    let top = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(s[4], top);
    assert_abs_diff_eq!(top, 10.0, epsilon = 1e-12);
    assert!(s[0] < top && s[7] < top);
    // three windows and k = 5 use the 2nd neighbour, the farthest other window
    let s = knn_anomaly(&[0.0, 1.0, 3.0, 6.0], 2, 5).unwrap();
    let w = [[0.0, 1.0], [1.0, 3.0], [3.0, 6.0]];
    let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let ws = [d(w[0], w[2]), d(w[1], w[0]).max(d(w[1], w[2])), d(w[2], w[0])];
    assert_abs_diff_eq!(s[0], ws[0]);
    assert_abs_diff_eq!(s[3], ws[2]);
    assert!(knn_anomaly(&[1.0, 2.0], 2, 1).is_err());
}

#[test]
fn svm_small_problems() {
    let x = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
    let m = svm_fit(&x, &[1, 2], &SvmParams::default()).unwrap();
    assert_eq!(svm_predict(&m, &x), vec![1, 2]);
    let xor = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
    let m = svm_fit(&xor, &[0, 0, 1, 1], &SvmParams { c: 10.0, ..SvmParams::default() }).unwrap();
    assert!(m.converged());
    assert_eq!(svm_predict(&m, &xor), vec![0, 0, 1, 1]);
    for machine in &m.machines {
        assert!(machine.alpha.iter().all(|&a| (0.0..=10.0).contains(&a)));
    }
    assert!(svm_fit(&x, &[1, 1], &SvmParams::default()).is_err());
}

#[test]
fn svm_three_classes_and_duplicates() {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (cls, centre) in [(0usize, [0.0, 0.0]), (1, [4.0, 0.0]), (2, [0.0, 4.0])] {
        for k in 0..6 {
            let a = k as f64;
            x.push(vec![centre[0] + 0.3 * a.cos(), centre[1] + 0.3 * a.sin()]);
            y.push(cls);
        }
    }
    let params = SvmParams { c: 100.0, gamma: Some(0.5), ..SvmParams::default() };
    let m = svm_fit(&x, &y, &params).unwrap();
    assert_eq!(svm_predict(&m, &x), y);
    let grid: Vec<Vec<f64>> = (0..15).flat_map(|i| (0..15).map(move |j| vec![i as f64 * 0.4 - 1.0, j as f64 * 0.4 - 1.0])).collect();
    let doubled_x: Vec<Vec<f64>> = x.iter().chain(&x).cloned().collect();
    let doubled_y: Vec<usize> = y.iter().chain(&y).copied().collect();
    let m2 = svm_fit(&doubled_x, &doubled_y, &params).unwrap();
    assert_eq!(svm_predict(&m, &grid), svm_predict(&m2, &grid));
}

#[test]
fn argmax_ignores_common_shift() {
    let v = [0.3, -1.0, 0.7, 0.1];
    let shifted: Vec<f64> = v.iter().map(|x| x + 5.0).collect();
    assert_eq!(argmax(&v), 2);
    assert_eq!(argmax(&shifted), 2);
}

/// Dual objective KKT check: free support vectors sit on the margin.
#[test]
fn svm_kkt_conditions() {
    let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()]).collect();
    let y: Vec<usize> = x.iter().map(|r| usize::from(r[0] * r[1] > 0.0)).collect();
    let params = SvmParams { c: 1.0, gamma: Some(2.0), ..SvmParams::default() };
    let m = svm_fit(&x, &y, &params).unwrap();
    assert!(m.converged());
    let mach = &m.machines[1];
    for (i, r) in x.iter().enumerate() {
        let yi = if y[i] == 1 { 1.0 } else { -1.0 };
        let margin = yi * mach.decision(r, m.gamma);
        match mach.support.iter().position(|s| s == r).map(|k| mach.alpha[k]) {
            None => assert!(margin >= 1.0 - 1e-2, "non-SV {i} margin {margin}"),
            Some(a) if a < params.c - 1e-9 => assert!((margin - 1.0).abs() < 1e-2, "free SV {i} margin {margin}"),
            Some(_) => assert!(margin <= 1.0 + 1e-2, "bound SV {i} margin {margin}"),
        }
    }
}

#[test]
fn pca_examples() {
    let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
    let m = pca_fit(&x, 1).unwrap();
    assert_abs_diff_eq!(m.components[0][0], 1.0 / 5f64.sqrt(), epsilon = 1e-9);
    assert_abs_diff_eq!(m.components[0][1], 2.0 / 5f64.sqrt(), epsilon = 1e-9);
    assert_abs_diff_eq!(m.explained[0], 1.0, epsilon = 1e-9);
    let origin = pca_project(&m, &[m.mean.clone()]);
    assert_abs_diff_eq!(origin[0][0], 0.0, epsilon = 1e-12);
    assert!(pca_fit(&x, 3).is_err());
    assert!(pca_fit(&x[..1], 1).is_err());
}

fn dense_spline_moments(pts: &[(usize, f64)]) -> Vec<f64> {
    let n = pts.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    a[(0, 0)] = 1.0;
    a[(n - 1, n - 1)] = 1.0;
    for i in 1..n - 1 {
        let h0 = (pts[i].0 - pts[i - 1].0) as f64;
        let h1 = (pts[i + 1].0 - pts[i].0) as f64;
        a[(i, i - 1)] = h0;
        a[(i, i)] = 2.0 * (h0 + h1);
        a[(i, i + 1)] = h1;
        b[i] = 6.0 * ((pts[i + 1].1 - pts[i].1) / h1 - (pts[i].1 - pts[i - 1].1) / h0);
    }
    a.lu().solve(&b).unwrap().iter().copied().collect()
}

fn gappy() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    prop::collection::vec((-10.0f64..10.0, prop::bool::weighted(0.6)), 6..60).prop_filter("enough points", |v| v.iter().filter(|p| p.1).count() >= 4).prop_map(|v| v.into_iter().unzip())
}

proptest! {
    #[test]
    fn interpolators_keep_observed_points((v, o) in gappy()) {
        for filled in [interp_linear(&v, &o).unwrap(), interp_nearest(&v, &o).unwrap(), interp_cubic(&v, &o).unwrap(), naive_fill(&v, &o).unwrap()] {
            for t in (0..v.len()).filter(|&t| o[t]) {
                prop_assert_eq!(filled[t], v[t]);
            }
        }
    }

    #[test]
    fn linear_matches_closed_form((v, o) in gappy()) {
        let filled = interp_linear(&v, &o).unwrap();
        let obs: Vec<usize> = (0..v.len()).filter(|&t| o[t]).collect();
        for t in 0..v.len() {
            let want = match (obs.iter().rev().find(|&&i| i <= t), obs.iter().find(|&&i| i >= t)) {
                (Some(&l), Some(&r)) if l == r => v[l],
                (Some(&l), Some(&r)) => v[l] + (v[r] - v[l]) * (t - l) as f64 / (r - l) as f64,
                (Some(&l), None) => v[l],
                (None, Some(&r)) => v[r],
                (None, None) => unreachable!(),
            };
            prop_assert!((filled[t] - want).abs() < 1e-6);
        }
    }

    #[test]
    fn spline_moments_match_dense_solve((v, o) in gappy()) {
        let pts: Vec<(usize, f64)> = (0..v.len()).filter(|&t| o[t]).map(|t| (t, v[t])).collect();
        for (a, b) in natural_spline_moments(&pts).iter().zip(dense_spline_moments(&pts)) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn seasonal_naive_with_unit_season_is_naive(h in prop::collection::vec(-5.0f64..5.0, 1..20), horizon in 1usize..10) {
        prop_assert_eq!(seasonal_naive(&h, horizon, 1).unwrap(), naive_forecast(&h, horizon).unwrap());
    }

    #[test]
    fn pca_structure(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 3..20), k in 1usize..=4) {
        let m = pca_fit(&rows, k).unwrap();
        for i in 0..k {
            for j in 0..k {
                let dot: f64 = m.components[i].iter().zip(&m.components[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() < 1e-6);
            }
        }
        prop_assert!(m.explained.windows(2).all(|w| w[0] >= w[1] - 1e-12));
        prop_assert!(m.explained.iter().sum::<f64>() <= 1.0 + 1e-9);
        let full = pca_fit(&rows, 4).unwrap();
        prop_assert!((full.explained.iter().sum::<f64>() - 1.0).abs() < 1e-5 || full.explained.iter().all(|&e| e == 0.0));
        let back = pca_reconstruct(&full, &pca_project(&full, &rows));
        for (r, b) in rows.iter().zip(&back) {
            for (x, y) in r.iter().zip(b) {
                prop_assert!((x - y).abs() < 1e-5);
            }
        }
    }
}
