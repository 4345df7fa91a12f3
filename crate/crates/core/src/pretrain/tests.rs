use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::synth_corpus;
use crate::model::ModelConfig;

fn tiny_short() -> ModelConfig {
    ModelConfig { seq_len: 64, ..ModelConfig::tiny() }
}

fn model(cfg: ModelConfig, seed: u64) -> MomentModel<f32> {
    MomentModel::init(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn quick_cfg(steps: usize) -> PretrainConfig {
    PretrainConfig {
        batch_size: 8,
        epochs: None,
        schedule: CosineSchedule { lr_init: 1e-3, lr_final: 1e-4, total_steps: steps },
        ..PretrainConfig::default()
    }
}

#[test]
fn mask_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(sample_patch_mask(64, 0.3, &mut rng).unwrap().n_masked(), 19);
    assert_eq!(sample_patch_mask(10, 0.3, &mut rng).unwrap().n_masked(), 3);
    assert_eq!(sample_patch_mask(3, 0.1, &mut rng).unwrap().n_masked(), 1);
    assert!(sample_patch_mask(10, 1.0, &mut rng).is_err());
    assert!(sample_patch_mask(10, 0.0, &mut rng).is_err());
}

#[test]
fn mask_sampling_is_seeded() {
    let a = sample_patch_mask(64, 0.3, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let b = sample_patch_mask(64, 0.3, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn masked_loss_examples() {
    let x: Vec<f64> = (0..16).map(|i| i as f64).collect();
    let obs = vec![true; 16];
    let plan = PatchMaskPlan::new(vec![true, false]);
    assert_eq!(masked_mse_loss(&x, &x, &plan, &obs, 8).unwrap(), 0.0);
    let mut shifted = x.clone();
    for v in &mut shifted[8..] {
        *v += 1.0;
    }
    shifted[0] += 100.0;
    assert_eq!(masked_mse_loss(&x, &shifted, &plan, &obs, 8).unwrap(), 1.0);
    assert!(masked_mse_loss(&x, &x, &PatchMaskPlan::all_observed(2), &obs, 8).is_err());
}

#[test]
fn masked_loss_skips_padding() {
    let x = vec![0.0f64; 16];
    let mut hat = vec![0.0f64; 16];
    hat[8] = 4.0;
    hat[9] = 2.0;
    let mut obs = vec![true; 16];
    obs[8] = false;
    let plan = PatchMaskPlan::new(vec![true, false]);
    assert_eq!(masked_mse_loss(&x, &hat, &plan, &obs, 8).unwrap(), 4.0 / 7.0);
}

fn loop_oracle(x: &[f64], hat: &[f64], masked: &[bool], obs: &[bool], p: usize) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for t in 0..x.len() {
        if masked[t / p] && obs[t] {
            s += (x[t] - hat[t]) * (x[t] - hat[t]);
            n += 1;
        }
    }
    (n > 0).then(|| s / n as f64)
}

proptest! {
    #[test]
    fn masked_loss_matches_loop(
        data in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, any::<bool>()), 32),
        masked in prop::collection::vec(any::<bool>(), 4),
    ) {
        let x: Vec<f64> = data.iter().map(|d| d.0).collect();
        let hat: Vec<f64> = data.iter().map(|d| d.1).collect();
        let obs: Vec<bool> = data.iter().map(|d| d.2).collect();
        let plan = PatchMaskPlan::new(masked.iter().map(|m| !m).collect());
        match loop_oracle(&x, &hat, &masked, &obs, 8) {
            Some(want) => prop_assert!((masked_mse_loss(&x, &hat, &plan, &obs, 8).unwrap() - want).abs() < 1e-12),
            None => prop_assert!(masked_mse_loss(&x, &hat, &plan, &obs, 8).is_err()),
        }
    }

    #[test]
    fn masked_loss_ignores_visible_predictions(
        x in prop::collection::vec(-5.0f64..5.0, 32),
        noise in prop::collection::vec(-50.0f64..50.0, 32),
        seed in any::<u64>(),
    ) {
        let plan = sample_patch_mask(4, 0.3, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let obs = vec![true; 32];
        let hat: Vec<f64> = x.iter().map(|v| v + 0.5).collect();
        let visible = plan.timestep_mask(8);
        let perturbed: Vec<f64> = hat.iter().zip(&noise).zip(&visible).map(|((h, n), &v)| if v { h + n } else { *h }).collect();
        prop_assert_eq!(masked_mse_loss(&x, &hat, &plan, &obs, 8).unwrap(), masked_mse_loss(&x, &perturbed, &plan, &obs, 8).unwrap());
    }

    #[test]
    fn every_draw_masks_exact_count(n in 2usize..200, ratio in 0.01f64..0.99, seed in any::<u64>()) {
        let plan = sample_patch_mask(n, ratio, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(plan.n_masked(), ((ratio * n as f64).floor() as usize).max(1));
    }
}

#[test]
fn step_budget() {
    let cfg = PretrainConfig::default();
    assert_eq!(cfg.total_steps(64 * 10), 20);
    assert_eq!(cfg.total_steps(64 * 5000), 2000);
    assert_eq!(PretrainConfig { epochs: None, ..cfg }.total_steps(1), 2000);
}

#[test]
fn empty_dataset_rejected() {
    let mut m = model(tiny_short(), 0);
    assert!(matches!(pretrain(&mut m, &[], &quick_cfg(3)), Err(Error::EmptySeries(_))));
}

#[test]
fn log_shape_and_schedule_endpoints() {
    let data = synth_corpus::<f32>(8, 64, 1).unwrap();
    let mut m = model(tiny_short(), 0);
    let cfg = PretrainConfig { schedule: CosineSchedule::default(), ..quick_cfg(0) };
    let cfg = PretrainConfig { schedule: CosineSchedule { total_steps: 6, ..cfg.schedule }, ..cfg };
    let log = pretrain(&mut m, &data, &cfg).unwrap();
    assert_eq!(log.steps.len(), 6);
    assert!(log.steps.windows(2).all(|w| w[0].step < w[1].step));
    assert_eq!(log.steps[0].lr, 1e-4);
    assert!((log.steps[5].lr - 1e-5).abs() < 1e-18);
    let csv = log.to_csv().unwrap();
    assert!(csv.starts_with("step,lr,loss\n0,"));
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn step_zero_loss_precedes_updates() {
    let data = synth_corpus::<f32>(8, 64, 1).unwrap();
    let cfg = quick_cfg(1);
    let mut trained = model(tiny_short(), 3);
    let before = trained.clone();
    let log = pretrain(&mut trained, &data, &cfg).unwrap();
    // replay the first batch against the untouched weights
    let windows = prepare_windows(&before, &data).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stream = BatchStream::new(windows.len(), cfg.batch_size);
    let batch: Vec<&Series<f32>> = stream.next(&mut rng).into_iter().map(|i| &windows[i]).collect();
    let plans = batch_plans(&before, &batch, cfg.mask_ratio, &mut rng).unwrap();
    let mut tape = Tape::new();
    let params = before.bind(&mut tape, |_| false);
    let loss = reconstruction_loss(&before, &mut tape, &params, &batch, &plans).unwrap();
    assert_eq!(log.steps[0].loss, tape.value(loss).data()[0] as f64);
    assert_ne!(trained.weights, before.weights);
}

#[test]
fn training_is_reproducible() {
    let data = synth_corpus::<f32>(8, 64, 2).unwrap();
    let run = || {
        let mut m = model(tiny_short(), 9);
        let log = pretrain(&mut m, &data, &quick_cfg(5)).unwrap();
        (m, log)
    };
    let (m1, l1) = run();
    let (m2, l2) = run();
    assert_eq!(l1, l2);
    assert_eq!(m1.weights, m2.weights);
}

#[test]
fn digest_covers_consumed_names() {
    let data = synth_corpus::<f32>(6, 64, 2).unwrap();
    let mut m = model(tiny_short(), 9);
    let log = pretrain(&mut m, &data, &quick_cfg(1)).unwrap();
    assert_eq!(log.data_digest, names_digest(data.iter().map(|s| s.name())));
    assert_ne!(log.data_digest, names_digest(data[..5].iter().map(|s| s.name())));
    assert_eq!(names_digest(["b", "a", "a"]), names_digest(["a", "b"]));
}

#[test]
fn nan_loss_reports_step() {
    let data = synth_corpus::<f32>(4, 64, 2).unwrap();
    let mut m = model(tiny_short(), 9);
    m.weights.recon_weight.data_mut()[0] = f32::NAN;
    match pretrain(&mut m, &data, &quick_cfg(3)) {
        Err(Error::Training { step, .. }) => assert_eq!(step, 0),
        other => panic!("expected training error, got {other:?}"),
    }
}

#[test]
fn too_short_series_rejected() {
    let mut m = model(tiny_short(), 0);
    let data = vec![Series::new("short", vec![1.0f32; 10])];
    assert!(matches!(pretrain(&mut m, &data, &quick_cfg(1)), Err(Error::Contract(_))));
}

#[test]
fn short_training_lowers_loss() {
    let data = synth_corpus::<f32>(32, 64, 4).unwrap();
    let mut m = model(tiny_short(), 1);
    let windows = prepare_windows(&m, &data).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let plans: Vec<PatchMaskPlan> = windows.iter().map(|_| sample_patch_mask(8, 0.3, &mut rng).unwrap()).collect();
    let before = evaluate_masked_mse(&m, &windows, &plans, 16).unwrap();
    pretrain(&mut m, &data, &quick_cfg(60)).unwrap();
    let after = evaluate_masked_mse(&m, &windows, &plans, 16).unwrap();
    assert!(after < before, "{after} !< {before}");
}

fn non_head(m: &MomentModel<f32>) -> Vec<(String, Vec<f32>)> {
    m.weights.named().into_iter().filter(|(n, _)| !n.starts_with("head.")).map(|(n, t)| (n, t.data().to_vec())).collect()
}

#[test]
fn probe_without_forecast_head_is_config_error() {
    let mut m = model(tiny_short(), 0);
    let data = synth_corpus::<f32>(2, 100, 0).unwrap();
    let ex = forecast_examples(&data[0], 64, 8, 8).unwrap();
    let err = linear_probe(&mut m, ProbeData::Forecast { examples: &ex }, &ProbeConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn zero_epoch_probe_changes_nothing() {
    let mut m = model(tiny_short(), 0);
    m.attach_forecast_head(8, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let before = m.clone();
    let data = synth_corpus::<f32>(4, 100, 0).unwrap();
    let ex = forecast_examples(&data[0], 64, 8, 8).unwrap();
    let cfg = ProbeConfig { epochs: 0, ..ProbeConfig::default() };
    linear_probe(&mut m, ProbeData::Forecast { examples: &ex }, &cfg).unwrap();
    linear_probe(&mut m, ProbeData::Reconstruction { windows: &data, mask_ratio: 0.3 }, &cfg).unwrap();
    assert_eq!(m, before);
}

#[test]
fn probes_freeze_encoder_and_improve_head() {
    let mut m = model(tiny_short(), 0);
    m.attach_forecast_head(8, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let frozen = non_head(&m);
    let data = synth_corpus::<f32>(6, 160, 0).unwrap();
    let ex: Vec<_> = data.iter().flat_map(|s| forecast_examples(s, 64, 8, 8).unwrap()).collect();

    let head_mse = |m: &MomentModel<f32>| {
        let (feats, stats) = forecast_features(m, &ex).unwrap();
        let mut tape = Tape::new();
        let params = m.bind(&mut tape, |_| false);
        let width = feats[0].len();
        let x = tape.constant(Tensor::new(&[ex.len(), width], feats.concat()).unwrap());
        let pred = m.forecast_from_features(&mut tape, &params, x).unwrap();
        let pred = tape.value(pred).data().to_vec();
        let mut sse = 0.0;
        for ((e, st), row) in ex.iter().zip(&stats).zip(pred.chunks(8)) {
            for (y, yh) in e.target.iter().zip(st.denormalize(row)) {
                sse += (*y as f64 - yh as f64).powi(2);
            }
        }
        sse / (ex.len() * 8) as f64
    };
    let untrained = head_mse(&m);
    let recon_before = m.weights.recon_weight.clone();
    let cfg = ProbeConfig { epochs: 5, batch_size: 16, ..ProbeConfig::default() };
    linear_probe(&mut m, ProbeData::Forecast { examples: &ex }, &cfg).unwrap();
    assert!(head_mse(&m) <= untrained);
    assert_eq!(m.weights.recon_weight, recon_before);
    linear_probe(&mut m, ProbeData::Reconstruction { windows: &data, mask_ratio: 0.3 }, &cfg).unwrap();
    assert_ne!(m.weights.recon_weight, recon_before);
    assert_eq!(non_head(&m), frozen);
}

#[test]
fn forecast_examples_layout() {
    let s = Series::new("s", (0..30).map(|v| v as f32).collect());
    let ex = forecast_examples(&s, 16, 4, 10).unwrap();
    assert_eq!(ex.len(), 3);
    let last = ex.last().unwrap();
    assert_eq!(last.target, vec![26.0, 27.0, 28.0, 29.0]);
    assert_eq!(last.history.values[15], 25.0);
    assert_eq!(last.history.values.len(), 16);
    let first = &ex[0];
    assert_eq!(first.target, vec![6.0, 7.0, 8.0, 9.0]);
    assert_eq!(first.history.observed.iter().filter(|&&o| o).count(), 6);
}
