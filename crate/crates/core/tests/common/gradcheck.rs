//! Central finite differences against the tape's reverse sweep, in f64.

use moment_core::data::Series;
use moment_core::model::{ModelConfig, MomentModel, PatchMaskPlan, Window, MaskFill};
use moment_core::numcore::{AttnShape, Tape, Tensor, Var};
use moment_core::pretrain::reconstruction_loss;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-3;
/// Denominator floor so near-zero gradients are judged on absolute error.
pub const FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for every coordinate `i`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// One random instance of a primitive: input tensors and a graph builder.
pub struct Case {
    pub inputs: Vec<Tensor<f64>>,
    pub build: Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Var>,
}

pub type CaseGen = fn(&mut ChaCha8Rng) -> Case;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Uniform values kept at least `gap` away from zero (for kinks).
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(gap..1.0);
        if rng.random_bool(0.5) { m } else { -m }
    })
}

fn case(inputs: Vec<Tensor<f64>>, build: impl Fn(&mut Tape<f64>, &[Var]) -> Var + 'static) -> Case {
    Case { inputs, build: Box::new(build) }
}

const ATTN: AttnShape = AttnShape { batch: 2, heads: 2, seq: 3, head_dim: 2 };

pub fn primitives() -> Vec<(&'static str, CaseGen)> {
    vec![
        ("add", |r| case(vec![uniform(r, &[3, 4]), uniform(r, &[3, 4])], |t, v| t.add(v[0], v[1]).unwrap())),
        ("sub", |r| case(vec![uniform(r, &[3, 4]), uniform(r, &[3, 4])], |t, v| t.sub(v[0], v[1]).unwrap())),
        ("mul", |r| case(vec![uniform(r, &[3, 4]), uniform(r, &[3, 4])], |t, v| t.mul(v[0], v[1]).unwrap())),
        ("add_row", |r| case(vec![uniform(r, &[2, 3, 4]), uniform(r, &[4])], |t, v| t.add_row(v[0], v[1]).unwrap())),
        ("mul_scalar", |r| {
            let s = r.random_range(-2.0..2.0);
            case(vec![uniform(r, &[3, 4])], move |t, v| t.mul_scalar(v[0], s))
        }),
        ("relu", |r| case(vec![away_from_zero(r, &[3, 4], 0.05)], |t, v| t.relu(v[0]))),
        ("matmul", |r| case(vec![uniform(r, &[2, 3, 5]), uniform(r, &[5, 2])], |t, v| t.matmul(v[0], v[1]).unwrap())),
        ("softmax_lastdim", |r| case(vec![uniform(r, &[3, 5])], |t, v| t.softmax_lastdim(v[0]))),
        ("scale_norm", |r| case(vec![uniform(r, &[3, 4]), uniform(r, &[4])], |t, v| t.scale_norm(v[0], v[1], 1e-6).unwrap())),
        ("reshape", |r| case(vec![uniform(r, &[3, 4])], |t, v| t.reshape(v[0], &[2, 6]).unwrap())),
        ("sum", |r| case(vec![uniform(r, &[3, 4])], |t, v| t.sum(v[0]))),
        ("mean", |r| case(vec![uniform(r, &[3, 4])], |t, v| t.mean(v[0]))),
        ("select_rows", |r| {
            let mut keep: Vec<bool> = (0..5).map(|_| r.random_bool(0.5)).collect();
            keep[0] = true;
            keep[1] = false;
            case(vec![uniform(r, &[5, 3]), uniform(r, &[3])], move |t, v| t.select_rows(v[0], v[1], &keep).unwrap())
        }),
        ("attn_scores", |r| {
            let scale = r.random_range(0.2..1.0);
            case(vec![uniform(r, &[6, 4]), uniform(r, &[6, 4])], move |t, v| t.attn_scores(v[0], v[1], ATTN, scale).unwrap())
        }),
        ("attn_mix", |r| case(vec![uniform(r, &[2, 2, 3, 3]), uniform(r, &[6, 4])], |t, v| t.attn_mix(v[0], v[1], ATTN).unwrap())),
        ("add_rel_bias", |r| {
            let buckets: Vec<usize> = (0..9).map(|_| r.random_range(0..5)).collect();
            case(vec![uniform(r, &[2, 2, 3, 3]), uniform(r, &[5, 2])], move |t, v| t.add_rel_bias(v[0], v[1], &buckets).unwrap())
        }),
        ("weighted_mse", |r| {
            let target: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();
            let mut weights: Vec<f64> = (0..12).map(|i| if i % 3 == 0 { 0.0 } else { r.random_range(0.1..2.0) }).collect();
            weights[1] = 1.0;
            case(vec![uniform(r, &[3, 4])], move |t, v| t.weighted_mse(v[0], &target, &weights).unwrap())
        }),
    ]
}

/// Builds `Σ w ⊙ out` for fixed random weights so every output coordinate matters.
fn scalarize(tape: &mut Tape<f64>, out: Var, weights: &[f64]) -> Var {
    let shape = tape.value(out).shape().to_vec();
    let w = tape.constant(Tensor::new(&shape, weights.to_vec()).unwrap());
    let prod = tape.mul(out, w).unwrap();
    tape.sum(prod)
}

fn forward(c: &Case, inputs: &[Tensor<f64>], weights: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let out = (c.build)(&mut tape, &vars);
    let loss = scalarize(&mut tape, out, weights);
    tape.value(loss).data()[0]
}

/// Worst relative error over every coordinate of every input.
pub fn check_case(c: &Case, rng: &mut ChaCha8Rng) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = c.inputs.iter().map(|x| tape.param(x.clone())).collect();
    let out = (c.build)(&mut tape, &vars);
    let weights: Vec<f64> = (0..tape.value(out).numel()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = scalarize(&mut tape, out, &weights);
    let grads = tape.backward(loss).unwrap();

    let mut worst = 0.0f64;
    for (i, &v) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(v, c.inputs[i].numel());
        let mut f = |x: &[f64]| {
            let mut inputs = c.inputs.clone();
            inputs[i] = Tensor::new(c.inputs[i].shape(), x.to_vec()).unwrap();
            forward(c, &inputs, &weights)
        };
        let numeric = central_difference(&mut f, c.inputs[i].data(), STEP);
        for (a, n) in analytic.iter().zip(&numeric) {
            worst = worst.max(relative_error(*a, *n));
        }
    }
    worst
}

/// Runs `trials` random instances of one primitive; returns the worst error.
pub fn check_primitive(gen: CaseGen, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials).map(|_| check_case(&gen(&mut rng), &mut rng)).fold(0.0, f64::max)
}

/// One layer, `D = 8`, 64-step windows: small enough to check every coordinate.
pub fn small_config() -> ModelConfig {
    ModelConfig { seq_len: 64, d_model: 8, n_layers: 1, n_heads: 2, d_ff: 16, ..ModelConfig::tiny() }
}

fn grad_model(config: ModelConfig, seed: u64) -> MomentModel<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = MomentModel::init(config, &mut rng).unwrap();
    m.attach_forecast_head(16, &mut rng).unwrap();
    m
}

/// Two windows: one complete, one left-padded with a gap, plus masked patches in both.
fn model_batch(t: usize, p: usize, seed: u64) -> (Vec<Series<f64>>, Vec<PatchMaskPlan>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let full: Vec<f64> = (0..t).map(|i| 3.0 + (i as f64 * 0.07).sin() * 2.0 + rng.random_range(-0.3..0.3)).collect();
    let mut obs = vec![true; t];
    obs[..t / 5].iter_mut().for_each(|o| *o = false);
    obs[t / 2..t / 2 + 5].iter_mut().for_each(|o| *o = false);
    let part: Vec<f64> = (0..t).map(|i| if obs[i] { (i as f64 * 0.3).cos() + rng.random_range(-0.3..0.3) } else { 0.0 }).collect();
    let series = vec![Series::new("a", full), Series::with_mask("b", part, obs).unwrap()];
    let n = t / p;
    let plans = (0..2)
        .map(|_| PatchMaskPlan::new((0..n).map(|i| i < n / 5 || rng.random_bool(0.7)).collect()))
        .collect();
    (series, plans)
}

fn model_loss(m: &MomentModel<f64>, series: &[Series<f64>], plans: &[PatchMaskPlan], head_weights: &[f64]) -> (Tape<f64>, Vec<Var>, Var) {
    let mut tape = Tape::new();
    let params = m.bind(&mut tape, |_| true);
    let refs: Vec<&Series<f64>> = series.iter().collect();
    let rec = reconstruction_loss(m, &mut tape, &params, &refs, plans).unwrap();
    let batch: Vec<Window<'_, f64>> = series.iter().zip(plans).map(|(s, plan)| Window { values: &s.values, observed: &s.observed, plan }).collect();
    let enc = m.encode(&mut tape, &params, &batch, MaskFill::Token).unwrap();
    let fc = m.forecast(&mut tape, &params, enc.hidden).unwrap();
    let fc = scalarize(&mut tape, fc, head_weights);
    let loss = tape.add(rec, fc).unwrap();
    let vars = params.vars.iter().map(|&(_, v)| v).collect();
    (tape, vars, loss)
}

/// Outcome of the end-to-end model check.
#[derive(Clone, Copy, Debug)]
pub struct ModelCheck {
    pub worst: f64,
    pub checked: usize,
    /// Coordinates whose `±h` evaluations changed some ReLU's sign, where the
    /// difference quotient is not a derivative estimate.
    pub kinked: usize,
}

/// Full forward/backward through the reconstruction and forecasting heads.
/// Checks every coordinate of every parameter, or `sample` random ones per
/// tensor, with central step `h`.
pub fn check_model(config: ModelConfig, seed: u64, sample: Option<usize>, h: f64) -> ModelCheck {
    let (t, p) = (config.seq_len, config.patch_len);
    let mut m = grad_model(config, seed);
    let (series, plans) = model_batch(t, p, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let head_weights: Vec<f64> = (0..2 * 16).map(|_| rng.random_range(-0.1..0.1)).collect();
    let (tape, vars, loss) = model_loss(&m, &series, &plans, &head_weights);
    let grads = tape.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| grads.get_or_zeros(v, tape.value(v).numel())).collect();
    let pattern = tape.relu_pattern();
    drop(tape);

    let mut out = ModelCheck { worst: 0.0, checked: 0, kinked: 0 };
    for (ti, grad) in analytic.iter().enumerate() {
        let coords: Vec<usize> = match sample {
            Some(k) => (0..k).map(|_| rng.random_range(0..grad.len())).collect(),
            None => (0..grad.len()).collect(),
        };
        for j in coords {
            let original = m.weights.named_mut()[ti].1.data()[j];
            let mut eval = |x: f64| {
                m.weights.named_mut()[ti].1.data_mut()[j] = x;
                let (tape, _, loss) = model_loss(&m, &series, &plans, &head_weights);
                (tape.value(loss).data()[0], tape.relu_pattern() == pattern)
            };
            let ((up, same_up), (down, same_down)) = (eval(original + h), eval(original - h));
            m.weights.named_mut()[ti].1.data_mut()[j] = original;
            if !(same_up && same_down) {
                out.kinked += 1;
                continue;
            }
            out.worst = out.worst.max(relative_error(grad[j], (up - down) / (2.0 * h)));
            out.checked += 1;
        }
    }
    out
}
