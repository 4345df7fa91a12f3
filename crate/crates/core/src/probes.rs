//! Interpretability probes: embedding geometry of synthetic suites, the
//! frequency–error curve, mask-embedding statistics and the zeros-vs-mask
//! reconstruction comparison.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::baselines::{pca_fit, pca_project};
use crate::data::{synth_sine, Series, SynthKind};
use crate::error::{bail, Result};
use crate::model::{MaskFill, MomentModel, PatchMaskPlan, Window};
use crate::numcore::Tape;
use crate::pretrain::{loss_weights, masked_mse_loss, prepare_windows, sample_patch_mask};
use crate::scalar::Scalar;
use crate::tasks::representations;

/// Mask ratio used by the reconstruction probes.
pub const PROBE_MASK_RATIO: f64 = 0.3;

/// `1, 2, …, 32` cycles per window.
pub fn frequency_grid() -> Vec<f64> {
    (1..=32).map(f64::from).collect()
}

/// `n` log-spaced trend powers spanning `[1/8, 8]`.
pub fn trend_grid(n: usize) -> Vec<f64> {
    let (lo, hi) = (0.125f64.ln(), 8f64.ln());
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()).collect(),
    }
}

/// Evenly spaced grid over the kind's admissible range (frequency and trend use their own grids).
pub fn default_grid(kind: SynthKind) -> Vec<f64> {
    match kind {
        SynthKind::Frequency => frequency_grid(),
        SynthKind::Trend => trend_grid(16),
        _ => {
            let (lo, hi) = kind.range();
            (0..16).map(|i| lo + (hi - lo) * i as f64 / 15.0).collect()
        }
    }
}

/// Two-dimensional PCA view of sequence representations across a parameter grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSuite {
    pub kind: SynthKind,
    pub grid: Vec<f64>,
    pub coords: Vec<[f64; 2]>,
    /// Variance share of each principal component.
    pub explained: Vec<f64>,
}

/// Embeds one synthetic series per grid value and projects the suite onto its top two components.
///
/// Every grid point shares the same noise seed, so differences come from `c` alone.
pub fn sinusoid_embedding_suite<S: Scalar>(model: &MomentModel<S>, kind: SynthKind, grid: &[f64], noise: f64, seed: u64) -> Result<EmbeddingSuite> {
    if grid.len() < 3 {
        bail!(Insufficient, "embedding suite needs at least 3 grid points, got {}", grid.len());
    }
    let t = model.config.seq_len;
    let series = grid.iter().map(|&c| synth_sine::<S>(kind, c, t, noise, seed)).collect::<Result<Vec<_>>>()?;
    let reps = representations(model, &series)?;
    let pca = pca_fit(&reps, 2)?;
    let coords = pca_project(&pca, &reps).into_iter().map(|z| [z[0], z[1]]).collect();
    Ok(EmbeddingSuite { kind, grid: grid.to_vec(), coords, explained: pca.explained })
}

impl EmbeddingSuite {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["c", "pc1", "pc2"]).map_err(csv_err)?;
        for (c, [a, b]) in self.grid.iter().zip(&self.coords) {
            w.write_record([c.to_string(), a.to_string(), b.to_string()]).map_err(csv_err)?;
        }
        into_string(w)
    }

    /// Scatter of the projections, coloured from blue (smallest c) to red (largest).
    pub fn to_svg(&self) -> String {
        let title = format!("{} suite, PC1 {:.1}% / PC2 {:.1}%", self.kind.as_str(), 100.0 * self.explained[0], 100.0 * self.explained[1]);
        scatter_svg(&title, &self.coords, &self.grid)
    }

    /// Writes `embedding_<kind>.csv` and `embedding_<kind>.svg` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let stem = format!("embedding_{}", self.kind.as_str());
        write_artifacts(dir, &stem, &self.to_csv()?, Some(&self.to_svg()))
    }
}

const SVG_SIZE: f64 = 480.0;
const SVG_MARGIN: f64 = 48.0;

fn scatter_svg(title: &str, points: &[[f64; 2]], colour_by: &[f64]) -> String {
    let range = |k: usize| {
        let lo = points.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > 1e-12 { (lo, hi) } else { (lo - 1.0, lo + 1.0) }
    };
    let ((x0, x1), (y0, y1)) = (range(0), range(1));
    let (c0, c1) = (colour_by.iter().copied().fold(f64::INFINITY, f64::min), colour_by.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let inner = SVG_SIZE - 2.0 * SVG_MARGIN;
    let sx = |x: f64| SVG_MARGIN + (x - x0) / (x1 - x0) * inner;
    let sy = |y: f64| SVG_SIZE - SVG_MARGIN - (y - y0) / (y1 - y0) * inner;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle">{}</text>"#, SVG_SIZE / 2.0, escape(title));
    let (left, bottom, right, top) = (SVG_MARGIN, SVG_SIZE - SVG_MARGIN, SVG_SIZE - SVG_MARGIN, SVG_MARGIN);
    let _ = writeln!(svg, r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" stroke="black" fill="none"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">PC1</text>"#, SVG_SIZE / 2.0, SVG_SIZE - 12.0);
    let _ = writeln!(svg, r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">PC2</text>"#, SVG_SIZE / 2.0, SVG_SIZE / 2.0);
    for (p, &c) in points.iter().zip(colour_by) {
        let f = if c1 > c0 { (c - c0) / (c1 - c0) } else { 0.5 };
        let (r, b) = ((255.0 * f).round() as u8, (255.0 * (1.0 - f)).round() as u8);
        let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="rgb({r},64,{b})"><title>c={c}</title></circle>"#, sx(p[0]), sy(p[1]));
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Io(std::io::Error::other(e.to_string()))
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| crate::Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn write_artifacts(dir: &Path, stem: &str, csv: &str, svg: Option<&str>) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = vec![dir.join(format!("{stem}.csv"))];
    fs::write(&paths[0], csv)?;
    if let Some(svg) = svg {
        paths.push(dir.join(format!("{stem}.svg")));
        fs::write(&paths[1], svg)?;
    }
    Ok(paths)
}

/// Masked-region reconstruction error against sinusoid frequency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyErrorCurve {
    pub grid: Vec<f64>,
    pub mse: Vec<f64>,
    pub spearman: f64,
}

/// Zero-shot masked reconstruction MSE (normalized space) of `sin(2π·c·t/T)` for each `c`.
/// One seeded 30% plan is shared by every grid point.
pub fn frequency_error_curve<S: Scalar>(model: &MomentModel<S>, grid: &[f64], noise: f64, seed: u64) -> Result<FrequencyErrorCurve> {
    if grid.is_empty() {
        bail!(Insufficient, "empty frequency grid");
    }
    let (t, n) = (model.config.seq_len, model.config.n_patches());
    let plan = sample_patch_mask(n, PROBE_MASK_RATIO, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let series = grid.iter().map(|&c| synth_sine::<S>(SynthKind::Frequency, c, t, noise, seed)).collect::<Result<Vec<_>>>()?;
    let plans = vec![plan; series.len()];
    let mse = masked_errors(model, &series, &plans, MaskFill::Token)?;
    let spearman = spearman(grid, &mse);
    Ok(FrequencyErrorCurve { grid: grid.to_vec(), mse, spearman })
}

impl FrequencyErrorCurve {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["c", "mse"]).map_err(csv_err)?;
        for (c, m) in self.grid.iter().zip(&self.mse) {
            w.write_record([c.to_string(), m.to_string()]).map_err(csv_err)?;
        }
        into_string(w)
    }

    /// Writes `frequency_error_curve.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        write_artifacts(dir, "frequency_error_curve", &self.to_csv()?, None)
    }
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks; 0 when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman needs paired samples");
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

/// Summary of the learned mask embedding's coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskTokenStats {
    pub dim: usize,
    pub mean: f64,
    /// Sample standard deviation.
    pub std: f64,
    /// Kolmogorov–Smirnov distance to the standard normal.
    pub ks: f64,
}

pub fn mask_embedding_stats<S: Scalar>(model: &MomentModel<S>) -> MaskTokenStats {
    let x: Vec<f64> = model.weights.mask_token.data().iter().map(|v| v.f64()).collect();
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let std = if x.len() > 1 { (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    MaskTokenStats { dim: x.len(), mean, std, ks: ks_standard_normal(&x) }
}

/// `sup |F_n − Φ|` for the empirical distribution of `x`.
pub fn ks_standard_normal(x: &[f64]) -> f64 {
    let phi = Normal::standard();
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = phi.cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

impl MaskTokenStats {
    /// Writes `mask_token_values.csv` (one coordinate per row) under `dir`.
    pub fn write_values<S: Scalar>(model: &MomentModel<S>, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["index", "value"]).map_err(csv_err)?;
        for (i, v) in model.weights.mask_token.data().iter().enumerate() {
            w.write_record([i.to_string(), v.f64().to_string()]).map_err(csv_err)?;
        }
        write_artifacts(dir, "mask_token_values", &into_string(w)?, None)
    }
}

/// Masked-region MSE for each series under the mask embedding and under zero filling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroVsMask {
    pub names: Vec<String>,
    pub token_mse: Vec<f64>,
    pub zeros_mse: Vec<f64>,
}

impl ZeroVsMask {
    pub fn mean_token(&self) -> f64 {
        mean(&self.token_mse)
    }

    pub fn mean_zeros(&self) -> f64 {
        mean(&self.zeros_mse)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["series", "mask_token_mse", "zero_fill_mse"]).map_err(csv_err)?;
        for ((n, a), b) in self.names.iter().zip(&self.token_mse).zip(&self.zeros_mse) {
            w.write_record([n.clone(), a.to_string(), b.to_string()]).map_err(csv_err)?;
        }
        into_string(w)
    }

    /// Writes `zero_vs_mask_pairs.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        write_artifacts(dir, "zero_vs_mask_pairs", &self.to_csv()?, None)
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Reconstructs each series twice under one seeded plan: hidden patches as the
/// mask embedding, then as zeros projected like data.
pub fn zero_vs_mask_probe<S: Scalar>(model: &MomentModel<S>, sample: &[Series<S>], mask_ratio: f64, seed: u64) -> Result<ZeroVsMask> {
    if sample.is_empty() {
        bail!(EmptySeries, "zero-vs-mask probe needs at least one series");
    }
    let windows = prepare_windows(model, sample)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plans = windows.iter().map(|w| probe_plan(model, w, mask_ratio, &mut rng)).collect::<Result<Vec<_>>>()?;
    Ok(ZeroVsMask {
        names: sample.iter().map(|s| s.name().to_string()).collect(),
        token_mse: masked_errors(model, &windows, &plans, MaskFill::Token)?,
        zeros_mse: masked_errors(model, &windows, &plans, MaskFill::Zeros)?,
    })
}

/// A random plan hiding at least one observed timestep of `w`.
fn probe_plan<S: Scalar, R: Rng + ?Sized>(model: &MomentModel<S>, w: &Series<S>, ratio: f64, rng: &mut R) -> Result<PatchMaskPlan> {
    let (n, p) = (model.config.n_patches(), model.config.patch_len);
    for _ in 0..32 {
        let plan = sample_patch_mask(n, ratio, rng)?;
        if loss_weights::<f64>(&plan, &w.observed, p).iter().any(|&x| x > 0.0) {
            return Ok(plan);
        }
    }
    bail!(Contract, "{}: masks keep landing on padding", w.name())
}

const PROBE_BATCH: usize = 32;

/// Per-window masked MSE in normalized space; windows must be model-length.
pub fn masked_errors<S: Scalar>(model: &MomentModel<S>, windows: &[Series<S>], plans: &[PatchMaskPlan], fill: MaskFill) -> Result<Vec<f64>> {
    if windows.len() != plans.len() {
        bail!(Dimension, "{} windows but {} plans", windows.len(), plans.len());
    }
    let p = model.config.patch_len;
    let mut out = Vec::with_capacity(windows.len());
    for (ws, ps) in windows.chunks(PROBE_BATCH).zip(plans.chunks(PROBE_BATCH)) {
        let batch: Vec<Window<'_, S>> = ws.iter().zip(ps).map(|(w, plan)| Window { values: &w.values, observed: &w.observed, plan }).collect();
        let mut tape = Tape::new();
        let params = model.bind(&mut tape, |_| false);
        let enc = model.encode(&mut tape, &params, &batch, fill)?;
        let rec = model.reconstruct(&mut tape, &params, enc.hidden)?;
        let rec = tape.value(rec).data();
        for (i, (w, plan)) in ws.iter().zip(ps).enumerate() {
            let t = model.config.seq_len;
            out.push(masked_mse_loss(&enc.normalized[i], &rec[i * t..(i + 1) * t], plan, &w.observed, p)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
