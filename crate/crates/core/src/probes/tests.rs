use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::synth_corpus;
use crate::error::Error;
use crate::model::ModelConfig;

fn model(cfg: ModelConfig) -> MomentModel<f32> {
    MomentModel::init(cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap()
}

fn short() -> MomentModel<f32> {
    model(ModelConfig { seq_len: 64, ..ModelConfig::tiny() })
}

#[test]
fn grids() {
    assert_eq!(frequency_grid().len(), 32);
    let g = trend_grid(7);
    assert_abs_diff_eq!(g[0], 0.125, epsilon = 1e-12);
    assert_abs_diff_eq!(g[3], 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(g[6], 8.0, epsilon = 1e-12);
    for w in g.windows(3) {
        assert_abs_diff_eq!(w[1] / w[0], w[2] / w[1], epsilon = 1e-12);
    }
    for kind in SynthKind::ALL {
        let (lo, hi) = kind.range();
        assert!(default_grid(kind).iter().all(|c| (lo..=hi).contains(c)));
    }
}

#[test]
fn spearman_with_ties() {
    let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]);
    assert_abs_diff_eq!(r, 4.5 / 22.5f64.sqrt(), epsilon = 1e-12);
    assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), 0.0);
}

fn ecdf_ks(x: &[f64]) -> f64 {
    let phi = Normal::standard();
    let n = x.len() as f64;
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&u| u < v).count() as f64 / n;
            let upto = x.iter().filter(|&&u| u <= v).count() as f64 / n;
            (phi.cdf(v) - below).abs().max((upto - phi.cdf(v)).abs())
        })
        .fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn spearman_matches_rank_difference_formula(x in prop::collection::hash_set(-1000i32..1000, 3..30), seed in any::<u64>()) {
        let x: Vec<f64> = x.into_iter().map(f64::from).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y: Vec<f64> = x.clone();
        rand::seq::SliceRandom::shuffle(y.as_mut_slice(), &mut rng);
        let (rx, ry) = (average_ranks(&x), average_ranks(&y));
        let n = x.len() as f64;
        let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
        let want = 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
        prop_assert!((spearman(&x, &y) - want).abs() < 1e-9);
        let cubed: Vec<f64> = y.iter().map(|v| v.powi(3) + 7.0).collect();
        prop_assert!((spearman(&x, &cubed) - spearman(&x, &y)).abs() < 1e-12);
    }

    #[test]
    fn ks_matches_ecdf_sup(x in prop::collection::vec(prop_oneof![-3.0f64..3.0, Just(0.5)], 1..40)) {
        prop_assert!((ks_standard_normal(&x) - ecdf_ks(&x)).abs() < 1e-12);
    }
}

#[test]
fn fresh_mask_token_looks_standard_normal() {
    let m = model(ModelConfig { d_model: 256, d_ff: 64, ..ModelConfig::tiny() });
    let stats = mask_embedding_stats(&m);
    assert_eq!(stats.dim, 256);
    // 5% critical value of the one-sample KS test at n = 256
    assert!(stats.ks < 1.36 / 16.0, "ks {}", stats.ks);
    assert!(stats.mean.abs() < 0.2 && (stats.std - 1.0).abs() < 0.15);
    assert_eq!(stats, mask_embedding_stats(&m.clone()));
}

#[test]
fn embedding_suite_contracts() {
    let m = short();
    assert!(matches!(sinusoid_embedding_suite(&m, SynthKind::Frequency, &[1.0, 2.0], 0.1, 1), Err(Error::Insufficient(_))));
    let grid = [1.0, 2.0, 4.0, 8.0, 16.0];
    let suite = sinusoid_embedding_suite(&m, SynthKind::Frequency, &grid, 0.1, 1).unwrap();
    assert_eq!(suite.coords.len(), 5);
    assert!(suite.explained.iter().all(|&e| e >= 0.0));
    assert!(suite.explained.iter().sum::<f64>() <= 1.0 + 1e-12);
    assert_eq!(suite, sinusoid_embedding_suite(&m, SynthKind::Frequency, &grid, 0.1, 1).unwrap());
    let csv = suite.to_csv().unwrap();
    assert!(csv.starts_with("c,pc1,pc2\n"));
    assert_eq!(csv.lines().count(), 6);
    assert_eq!(suite.to_svg().matches("<circle").count(), 5);

    let flat = sinusoid_embedding_suite(&m, SynthKind::Phase, &[1.0; 4], 0.1, 1).unwrap();
    for [a, b] in flat.coords {
        assert!(a.abs() < 1e-9 && b.abs() < 1e-9);
    }
}

#[test]
fn artifacts_use_probe_kind_names() {
    let dir = std::env::temp_dir().join(format!("probe-artifacts-{}", std::process::id()));
    let m = short();
    let suite = sinusoid_embedding_suite(&m, SynthKind::Trend, &trend_grid(4), 0.0, 1).unwrap();
    let paths = suite.write(&dir).unwrap();
    let names: Vec<_> = paths.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect();
    assert_eq!(names, ["embedding_trend.csv", "embedding_trend.svg"]);
    assert!(std::fs::read_to_string(&paths[1]).unwrap().starts_with("<svg"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn frequency_curve_is_deterministic() {
    let m = short();
    let grid = [1.0, 3.0, 5.0, 7.0];
    let a = frequency_error_curve(&m, &grid, 0.0, 9).unwrap();
    assert_eq!(a.mse.len(), 4);
    assert!(a.mse.iter().all(|v| v.is_finite() && *v >= 0.0));
    assert_eq!(a, frequency_error_curve(&m, &grid, 0.0, 9).unwrap());
    assert_eq!(a.to_csv().unwrap().lines().count(), 5);
}

#[test]
fn zero_vs_mask_pairs() {
    let m = short();
    let sample = synth_corpus::<f32>(6, 100, 2).unwrap();
    let out = zero_vs_mask_probe(&m, &sample, 0.3, 4).unwrap();
    assert_eq!(out.token_mse.len(), 6);
    assert_eq!(out.zeros_mse.len(), 6);
    assert_ne!(out.token_mse, out.zeros_mse);
    assert_eq!(out, zero_vs_mask_probe(&m, &sample, 0.3, 4).unwrap());

    // with nothing hidden the two input routes coincide
    let w = crate::data::fit_to_window(&sample[0], 64).unwrap();
    let plan = PatchMaskPlan::all_observed(8);
    let win = [Window { values: &w.values, observed: &w.observed, plan: &plan }];
    assert_eq!(m.reconstruct_windows(&win, MaskFill::Token).unwrap(), m.reconstruct_windows(&win, MaskFill::Zeros).unwrap());
}
