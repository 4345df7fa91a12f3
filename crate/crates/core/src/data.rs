//! Series container, CSV ingestion, split protocol, windowing and synthetic generators.

use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};
use crate::model::left_pad;
use crate::scalar::Scalar;

/// Seed used for every split unless overridden.
pub const SPLIT_SEED: u64 = 13;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub name: String,
    pub frequency: Option<String>,
    pub class_label: Option<usize>,
    pub anomaly_labels: Option<Vec<bool>>,
}

/// A univariate series with its observation mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Series<S = f32> {
    pub values: Vec<S>,
    pub observed: Vec<bool>,
    pub meta: SeriesMeta,
}

impl<S: Scalar> Series<S> {
    /// Fully observed series.
    pub fn new(name: impl Into<String>, values: Vec<S>) -> Self {
        let observed = vec![true; values.len()];
        Self { values, observed, meta: SeriesMeta { name: name.into(), ..Default::default() } }
    }

    pub fn with_mask(name: impl Into<String>, values: Vec<S>, observed: Vec<bool>) -> Result<Self> {
        if values.len() != observed.len() {
            bail!(Dimension, "{} values with {} mask entries", values.len(), observed.len());
        }
        Ok(Self { values, observed, meta: SeriesMeta { name: name.into(), ..Default::default() } })
    }

    pub fn with_anomaly_labels(mut self, labels: Vec<bool>) -> Result<Self> {
        if labels.len() != self.values.len() {
            bail!(Dimension, "{} labels for {} timesteps", labels.len(), self.values.len());
        }
        self.meta.anomaly_labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self) -> &str {
        &self.meta.name
    }

    pub fn n_observed(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    /// Contiguous sub-range, labels included.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        let mut meta = self.meta.clone();
        meta.anomaly_labels = meta.anomaly_labels.map(|l| l[range.clone()].to_vec());
        Self { values: self.values[range.clone()].to_vec(), observed: self.observed[range].to_vec(), meta }
    }

    /// Drops unobserved trailing entries (ragged columns in a collection file).
    pub fn trim_trailing_missing(mut self) -> Self {
        let keep = self.observed.iter().rposition(|&o| o).map_or(0, |i| i + 1);
        self.values.truncate(keep);
        self.observed.truncate(keep);
        if let Some(l) = &mut self.meta.anomaly_labels {
            l.truncate(keep);
        }
        self
    }

    pub fn cast<T: Scalar>(&self) -> Series<T> {
        Series {
            values: self.values.iter().map(|&v| T::of(v.f64())).collect(),
            observed: self.observed.clone(),
            meta: self.meta.clone(),
        }
    }
}

fn csv_line(err: &csv::Error) -> usize {
    err.position().map_or(0, |p| p.line() as usize)
}

fn parse_err(line: usize, detail: impl Into<String>) -> Error {
    Error::Parse { line, detail: detail.into() }
}

/// One series per column of a headed CSV; empty cells are missing observations.
pub fn load_csv<S: Scalar>(path: &Path) -> Result<Vec<Series<S>>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::Io(std::io::Error::other(e.to_string())),
        _ => parse_err(csv_line(&e), e.to_string()),
    })?;
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let mut columns: Vec<(Vec<S>, Vec<bool>)> = vec![(Vec::new(), Vec::new()); headers.len()];
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(csv_line(&e), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        for ((values, observed), field) in columns.iter_mut().zip(record.iter()) {
            let field = field.trim();
            if field.is_empty() {
                values.push(S::zero());
                observed.push(false);
            } else {
                let v = f64::from_str(field).map_err(|_| parse_err(line, format!("non-numeric cell {field:?}")))?;
                values.push(S::of(v));
                observed.push(true);
            }
        }
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("series");
    Ok(headers
        .iter()
        .zip(columns)
        .map(|(h, (values, observed))| Series {
            values,
            observed,
            meta: SeriesMeta { name: if h.is_empty() { stem.to_string() } else { h.to_string() }, ..Default::default() },
        })
        .collect())
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    Ok(std::fs::read_to_string(path)?
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty())
        .collect())
}

/// One binary label per row; a non-numeric first row is treated as a header.
pub fn load_labels(path: &Path) -> Result<Vec<bool>> {
    let mut out = Vec::new();
    for (idx, (line, text)) in read_lines(path)?.into_iter().enumerate() {
        let field = text.split(',').next().unwrap_or("").trim();
        match field {
            "0" | "0.0" => out.push(false),
            "1" | "1.0" => out.push(true),
            _ if idx == 0 && f64::from_str(field).is_err() => {}
            _ => return Err(parse_err(line, format!("label {field:?} is not 0 or 1"))),
        }
    }
    Ok(out)
}

/// One anomaly score per row (first field); a non-numeric first row is treated as a header.
pub fn load_scores(path: &Path) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (idx, (line, text)) in read_lines(path)?.into_iter().enumerate() {
        let field = text.split(',').next().unwrap_or("").trim();
        match f64::from_str(field) {
            Ok(v) if v.is_finite() => out.push(v),
            Ok(_) => return Err(parse_err(line, format!("score {field:?} is not finite"))),
            Err(_) if idx == 0 => {}
            Err(_) => return Err(parse_err(line, format!("non-numeric score {field:?}"))),
        }
    }
    Ok(out)
}

/// `series_name,class` rows; an optional header row is skipped.
pub fn load_classes(path: &Path) -> Result<Vec<(String, usize)>> {
    let mut out = Vec::new();
    for (idx, (line, text)) in read_lines(path)?.into_iter().enumerate() {
        let mut parts = text.splitn(2, ',');
        let (name, class) = (parts.next().unwrap_or("").trim(), parts.next().unwrap_or("").trim());
        match usize::from_str(class) {
            Ok(c) => out.push((name.to_string(), c)),
            Err(_) if idx == 0 => {}
            Err(_) => return Err(parse_err(line, format!("class {class:?} is not a non-negative integer"))),
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Contiguous prefix/middle/suffix of each long series.
    Horizontal,
    /// Whole series assigned to one partition.
    BySeries,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub fractions: [f64; 3],
    pub seed: u64,
    pub mode: SplitMode,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { fractions: [0.6, 0.1, 0.3], seed: SPLIT_SEED, mode: SplitMode::Horizontal }
    }
}

impl SplitSpec {
    fn validate(&self) -> Result<()> {
        if self.fractions.iter().any(|&f| !(0.0..=1.0).contains(&f)) || (self.fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            bail!(Config, "split fractions {:?} must be non-negative and sum to 1", self.fractions);
        }
        Ok(())
    }

    /// Cut points `floor(f₀·n)` and `floor((f₀+f₁)·n)`; the remainder goes to test.
    fn boundaries(&self, n: usize) -> (usize, usize) {
        let cut = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let a = cut(self.fractions[0]);
        let b = cut(self.fractions[0] + self.fractions[1]).max(a);
        (a.min(n), b.min(n))
    }
}

/// Train/validation/test triple.
#[derive(Clone, Debug, PartialEq)]
pub struct Splits<T> {
    pub train: T,
    pub val: T,
    pub test: T,
}

pub fn split_horizontal<S: Scalar>(x: &Series<S>, spec: &SplitSpec) -> Result<Splits<Series<S>>> {
    spec.validate()?;
    if x.len() < 10 {
        bail!(Insufficient, "series of length {} is too short to split", x.len());
    }
    let (a, b) = spec.boundaries(x.len());
    Ok(Splits { train: x.slice(0..a), val: x.slice(a..b), test: x.slice(b..x.len()) })
}

/// Seeded shuffle, then partition by count.
pub fn split_by_series<T: Clone>(collection: &[T], spec: &SplitSpec) -> Result<Splits<Vec<T>>> {
    spec.validate()?;
    if collection.len() < 3 {
        bail!(Insufficient, "need at least 3 series to split, got {}", collection.len());
    }
    let mut order: Vec<usize> = (0..collection.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let (a, b) = spec.boundaries(order.len());
    let pick = |idx: &[usize]| idx.iter().map(|&i| collection[i].clone()).collect::<Vec<_>>();
    Ok(Splits { train: pick(&order[..a]), val: pick(&order[a..b]), test: pick(&order[b..]) })
}

/// Brings a series to exactly `target` steps: longer inputs are strided by
/// `⌈L/T⌉` from the most recent point backwards, shorter ones are left-padded.
pub fn fit_to_window<S: Scalar>(x: &Series<S>, target: usize) -> Result<Series<S>> {
    if x.is_empty() {
        bail!(EmptySeries, "cannot window an empty series");
    }
    let mut out = if x.len() > target {
        let stride = x.len().div_ceil(target);
        let mut idx: Vec<usize> = (0..x.len()).rev().step_by(stride).take(target).collect();
        idx.reverse();
        let mut meta = x.meta.clone();
        meta.anomaly_labels = meta.anomaly_labels.map(|l| idx.iter().map(|&i| l[i]).collect());
        Series { values: idx.iter().map(|&i| x.values[i]).collect(), observed: idx.iter().map(|&i| x.observed[i]).collect(), meta }
    } else {
        x.clone()
    };
    if out.len() < target {
        let pad = target - out.len();
        let (values, observed) = left_pad(&out.values, &out.observed, target)?;
        out.values = values;
        out.observed = observed;
        if let Some(l) = &mut out.meta.anomaly_labels {
            let mut padded = vec![false; pad];
            padded.extend_from_slice(l);
            *l = padded;
        }
    }
    Ok(out)
}

/// Keeps every `factor`-th point of series longer than `threshold`; anomaly labels are OR-pooled per group.
pub fn downsample<S: Scalar>(x: &Series<S>, threshold: usize, factor: usize) -> Series<S> {
    if x.len() <= threshold || factor <= 1 {
        return x.clone();
    }
    let mut meta = x.meta.clone();
    meta.anomaly_labels = meta.anomaly_labels.map(|l| l.chunks(factor).map(|g| g.iter().any(|&b| b)).collect());
    Series {
        values: x.values.iter().step_by(factor).copied().collect(),
        observed: x.observed.iter().step_by(factor).copied().collect(),
        meta,
    }
}

/// Factor of interest varied in a synthetic probe suite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// `(t/T)^c`
    Trend,
    /// `c·sin(2π·8t/T)`
    Amplitude,
    /// `sin(2π·c·t/T)`
    Frequency,
    /// `sin(2π·8t/T) + c`
    Baseline,
    /// `sin(2π·8t/T + c)`
    Phase,
}

impl SynthKind {
    pub const ALL: [SynthKind; 5] = [Self::Trend, Self::Amplitude, Self::Frequency, Self::Baseline, Self::Phase];

    /// Closed interval of admissible `c`.
    pub fn range(self) -> (f64, f64) {
        match self {
            Self::Trend => (0.125, 8.0),
            Self::Amplitude => (0.0, 32.0),
            Self::Frequency => (1.0, 256.0),
            Self::Baseline => (-32.0, 32.0),
            Self::Phase => (0.0, std::f64::consts::TAU),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Trend => "trend",
            Self::Amplitude => "amplitude",
            Self::Frequency => "frequency",
            Self::Baseline => "baseline",
            Self::Phase => "phase",
        }
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown synthetic kind {s:?}")))
    }
}

/// Synthetic sinusoid-family series with additive `N(0, σ²)` noise.
pub fn synth_sine<S: Scalar>(kind: SynthKind, c: f64, len: usize, noise: f64, seed: u64) -> Result<Series<S>> {
    let (lo, hi) = kind.range();
    if !(lo..=hi).contains(&c) {
        bail!(Config, "{} parameter {c} outside [{lo}, {hi}]", kind.as_str());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let t_len = len as f64;
    let base = |t: f64| (std::f64::consts::TAU * 8.0 * t / t_len).sin();
    let values = (0..len)
        .map(|t| {
            let t = t as f64;
            let y = match kind {
                SynthKind::Trend => (t / t_len).powf(c),
                SynthKind::Amplitude => c * base(t),
                SynthKind::Frequency => (std::f64::consts::TAU * c * t / t_len).sin(),
                SynthKind::Baseline => base(t) + c,
                SynthKind::Phase => (std::f64::consts::TAU * 8.0 * t / t_len + c).sin(),
            };
            S::of(y + if noise > 0.0 { normal.sample(&mut rng) } else { 0.0 })
        })
        .collect();
    Ok(Series::new(format!("{}_{c}", kind.as_str()), values))
}

/// Zero-mean AR(1) path `x_t = φ·x_{t−1} + ε_t`, started from its stationary law.
pub fn synth_ar1<S: Scalar>(phi: f64, len: usize, noise: f64, seed: u64) -> Result<Series<S>> {
    if !(phi.abs() < 1.0) || !(noise > 0.0) {
        bail!(Config, "AR(1) needs |φ| < 1 and positive noise, got φ={phi}, σ={noise}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = Normal::new(0.0, noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut x = eps.sample(&mut rng) / (1.0 - phi * phi).sqrt();
    let values = (0..len)
        .map(|_| {
            let v = x;
            x = phi * x + eps.sample(&mut rng);
            S::of(v)
        })
        .collect();
    Ok(Series::new(format!("ar1_{phi:.3}"), values))
}

/// Seeded pre-training corpus: alternating random-frequency sinusoids and AR(1) paths.
pub fn synth_corpus<S: Scalar>(n_series: usize, len: usize, seed: u64) -> Result<Vec<Series<S>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_series)
        .map(|i| {
            let sub_seed = rng.random::<u64>();
            let mut s = if i % 2 == 0 {
                let period = rng.random_range(16.0..128.0);
                let amp = rng.random_range(0.5..5.0);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                let offset = rng.random_range(-10.0..10.0);
                let normal = Normal::new(0.0, 0.1 * amp).expect("positive std");
                let mut noise_rng = ChaCha8Rng::seed_from_u64(sub_seed);
                let values = (0..len)
                    .map(|t| {
                        let y = offset + amp * (std::f64::consts::TAU * t as f64 / period + phase).sin();
                        S::of(y + normal.sample(&mut noise_rng))
                    })
                    .collect();
                Series::new("", values)
            } else {
                let phi = rng.random_range(0.5..0.95);
                let offset = rng.random_range(-10.0..10.0);
                let mut s = synth_ar1::<S>(phi, len, 1.0, sub_seed)?;
                s.values.iter_mut().for_each(|v| *v += S::of(offset));
                s
            };
            s.meta.name = format!("synth_{i:04}");
            Ok(s)
        })
        .collect()
}
