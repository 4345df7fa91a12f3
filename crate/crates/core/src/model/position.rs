use crate::error::{bail, Result};
use crate::numcore::Tensor;
use crate::scalar::Scalar;

/// Absolute sinusoidal encodings: `PE[pos, 2i] = sin(pos / 10000^(2i/D))`, `PE[pos, 2i+1] = cos(·)`.
pub fn sinusoidal_pe<S: Scalar>(n_positions: usize, d_model: usize) -> Result<Tensor<S>> {
    if d_model == 0 || d_model % 2 != 0 {
        bail!(Config, "sinusoidal positions need an even, positive width; got {d_model}");
    }
    Tensor::new(
        &[n_positions, d_model],
        (0..n_positions * d_model)
            .map(|idx| {
                let (pos, col) = (idx / d_model, idx % d_model);
                let pair = (col / 2 * 2) as f64;
                let angle = pos as f64 / 10000f64.powf(pair / d_model as f64);
                S::of(if col % 2 == 0 { angle.sin() } else { angle.cos() })
            })
            .collect(),
    )
}

/// Bidirectional log-bucketed relative position, for offset `key − query`.
///
/// Half the buckets hold non-positive offsets and half positive ones. Within a
/// half, the first quarter of all buckets are exact offsets; larger offsets are
/// spaced logarithmically up to `max_distance` and clamped past it.
pub fn relative_bucket(rel_pos: i64, n_buckets: usize, max_distance: usize) -> usize {
    let half = n_buckets / 2;
    let base = if rel_pos > 0 { half } else { 0 };
    let n = rel_pos.unsigned_abs() as usize;
    let max_exact = half / 2;
    if n < max_exact {
        return base + n;
    }
    let ratio = (n as f64 / max_exact as f64).ln() / (max_distance as f64 / max_exact as f64).ln();
    // the nudge keeps exact powers (e.g. n = 16 → ratio 1/4) from flooring one bucket low
    let large = max_exact + (ratio * (half - max_exact) as f64 + 1e-9).floor() as usize;
    base + large.min(half - 1)
}

/// Row-major `seq×seq` map from (query i, key j) to bucket id.
pub fn bucket_map(seq: usize, n_buckets: usize, max_distance: usize) -> Vec<usize> {
    (0..seq * seq)
        .map(|idx| {
            let (i, j) = ((idx / seq) as i64, (idx % seq) as i64);
            relative_bucket(j - i, n_buckets, max_distance)
        })
        .collect()
}
