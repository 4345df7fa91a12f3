//! Reverse-mode automatic differentiation over a Wengert list.
//!
//! Every operation appends a node holding its forward value and enough context
//! to propagate gradients. Nodes are only ever appended, so the tape is
//! topologically ordered by construction and `backward` is a single reverse
//! sweep.

use super::tensor::{gemm_nn, gemm_nt, gemm_tn, Tensor};
use crate::error::{bail, Error, Result};
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Geometry of multi-head attention over a batch laid out as `[batch·seq, heads·head_dim]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttnShape {
    pub batch: usize,
    pub heads: usize,
    pub seq: usize,
    pub head_dim: usize,
}

impl AttnShape {
    fn model_dim(&self) -> usize {
        self.heads * self.head_dim
    }

    fn scores_len(&self) -> usize {
        self.batch * self.heads * self.seq * self.seq
    }
}

enum Op<S> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulScalar(Var, S),
    Relu(Var),
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Softmax(Var),
    ScaleNorm { x: Var, gamma: Var, inv_rms: Vec<S> },
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    SelectRows { x: Var, fill: Var, keep: Vec<bool> },
    AttnScores { q: Var, k: Var, shape: AttnShape, scale: S },
    AttnMix { p: Var, v: Var, shape: AttnShape },
    RelBias { scores: Var, table: Var, buckets: Vec<usize>, heads: usize },
    WeightedMse { pred: Var, target: Vec<S>, weights: Vec<S>, denom: S },
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Recorded computation graph.
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by one backward sweep, indexed by [`Var`].
pub struct Gradients<S> {
    grads: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&[S]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v`, or zeros of length `numel` if nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, numel: usize) -> Vec<S> {
        self.get(v).map_or_else(|| vec![S::zero(); numel], <[S]>::to_vec)
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<S>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn accumulate<S: Scalar>(grads: &mut [Option<Vec<S>>], v: Var, numel: usize) -> &mut [S] {
    grads[v.0].get_or_insert_with(|| vec![S::zero(); numel])
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<S>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<S>, requires_grad: bool) -> Var {
        if requires_grad {
            self.param(value)
        } else {
            self.constant(value)
        }
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Sign of every ReLU input recorded so far, in recording order. Two
    /// evaluations with different patterns straddle a kink of the graph.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) => Some(x),
                _ => None,
            })
            .flat_map(|x| self.nodes[x.0].value.data().iter().map(|&v| v > S::zero()))
            .collect()
    }

    /// Numeric error naming `location` if `v` holds a non-finite value.
    pub fn ensure_finite(&self, v: Var, location: &str) -> Result<()> {
        if self.value(v).is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric { location: location.to_string() })
        }
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            bail!(Dimension, "{what}: shapes {sa:?} and {sb:?} differ");
        }
        Ok(())
    }

    fn zip_map(&mut self, a: Var, b: Var, f: impl Fn(S, S) -> S) -> Tensor<S> {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape(), data).expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.zip_map(a, b, |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let out = self.zip_map(a, b, |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.zip_map(a, b, |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    /// Adds a length-D vector to every row of a `[..., D]` tensor.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let d = self.value(x).last_dim();
        if self.value(bias).numel() != d {
            bail!(Dimension, "add_row: bias of {} values for rows of {d}", self.value(bias).numel());
        }
        let b = self.value(bias).data().to_vec();
        let tx = self.value(x);
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(d) {
            for (o, &bv) in row.iter_mut().zip(&b) {
                *o += bv;
            }
        }
        let out = Tensor::new(tx.shape(), data)?;
        Ok(self.push(out, Op::AddRow(x, bias), &[x, bias]))
    }

    pub fn mul_scalar(&mut self, x: Var, s: S) -> Var {
        let tx = self.value(x);
        let out = Tensor::new(tx.shape(), tx.data().iter().map(|&v| v * s).collect()).expect("shape preserved");
        self.push(out, Op::MulScalar(x, s), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let out = Tensor::new(tx.shape(), tx.data().iter().map(|&v| v.max(S::zero())).collect())
            .expect("shape preserved");
        self.push(out, Op::Relu(x), &[x])
    }

    /// `[m×k] · [k×n]`. Leading dimensions of `a` are flattened into rows.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if tb.shape().len() != 2 {
            bail!(Dimension, "matmul: right operand must be 2-D, got {:?}", tb.shape());
        }
        let k = ta.last_dim();
        let (kb, n) = (tb.shape()[0], tb.shape()[1]);
        if k != kb {
            bail!(Dimension, "matmul: inner dimensions {k} and {kb} disagree");
        }
        let m = ta.numel() / k;
        let mut data = vec![S::zero(); m * n];
        gemm_nn(ta.data(), tb.data(), &mut data, m, k, n);
        let mut shape = ta.shape().to_vec();
        *shape.last_mut().expect("non-empty shape") = n;
        let out = Tensor::new(&shape, data)?;
        Ok(self.push(out, Op::MatMul { a, b, m, k, n }, &[a, b]))
    }

    /// Softmax over the trailing dimension, max-subtracted.
    pub fn softmax_lastdim(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let d = tx.last_dim();
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(d) {
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let mut total = S::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let out = Tensor::new(tx.shape(), data).expect("shape preserved");
        self.push(out, Op::Softmax(x), &[x])
    }

    /// Scale-only RMS normalization over the trailing dimension: no centering, no bias.
    pub fn scale_norm(&mut self, x: Var, gamma: Var, eps: S) -> Result<Var> {
        let d = self.value(x).last_dim();
        if self.value(gamma).numel() != d {
            bail!(Dimension, "scale_norm: gamma has {} entries for width {d}", self.value(gamma).numel());
        }
        let g = self.value(gamma).data().to_vec();
        let tx = self.value(x);
        let mut data = tx.data().to_vec();
        let dn = S::of(d as f64);
        let mut inv_rms = Vec::with_capacity(data.len() / d);
        for row in data.chunks_mut(d) {
            let ms = row.iter().map(|&v| v * v).sum::<S>() / dn;
            let r = (ms + eps).sqrt().recip();
            inv_rms.push(r);
            for (v, &gi) in row.iter_mut().zip(&g) {
                *v = gi * *v * r;
            }
        }
        let out = Tensor::new(tx.shape(), data)?;
        Ok(self.push(out, Op::ScaleNorm { x, gamma, inv_rms }, &[x, gamma]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(total), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let total: S = t.data().iter().copied().sum();
        let out = Tensor::scalar(total / S::of(t.numel() as f64));
        self.push(out, Op::Mean(x), &[x])
    }

    /// Keeps row `r` of `x` where `keep[r]`, otherwise substitutes the vector `fill`.
    pub fn select_rows(&mut self, x: Var, fill: Var, keep: &[bool]) -> Result<Var> {
        let d = self.value(x).last_dim();
        let rows = self.value(x).numel() / d;
        if keep.len() != rows {
            bail!(Dimension, "select_rows: {} flags for {rows} rows", keep.len());
        }
        if self.value(fill).numel() != d {
            bail!(Dimension, "select_rows: fill has {} entries for width {d}", self.value(fill).numel());
        }
        let f = self.value(fill).data().to_vec();
        let tx = self.value(x);
        let mut data = tx.data().to_vec();
        for (row, &k) in data.chunks_mut(d).zip(keep) {
            if !k {
                row.copy_from_slice(&f);
            }
        }
        let out = Tensor::new(tx.shape(), data)?;
        Ok(self.push(out, Op::SelectRows { x, fill, keep: keep.to_vec() }, &[x, fill]))
    }

    fn check_attn_operand(&self, v: Var, shape: &AttnShape, what: &str) -> Result<()> {
        let expect = shape.batch * shape.seq * shape.model_dim();
        if self.value(v).numel() != expect || self.value(v).last_dim() != shape.model_dim() {
            bail!(Dimension, "{what}: operand {:?} does not fit {shape:?}", self.value(v).shape());
        }
        Ok(())
    }

    /// Per-head scaled dot products: `[batch, heads, seq, seq]`.
    pub fn attn_scores(&mut self, q: Var, k: Var, shape: AttnShape, scale: S) -> Result<Var> {
        self.check_attn_operand(q, &shape, "attn_scores")?;
        self.check_attn_operand(k, &shape, "attn_scores")?;
        let AttnShape { batch, heads, seq, head_dim } = shape;
        let dm = shape.model_dim();
        let (tq, tk) = (self.value(q).data(), self.value(k).data());
        let mut data = vec![S::zero(); shape.scores_len()];
        for b in 0..batch {
            for h in 0..heads {
                let base = ((b * heads) + h) * seq * seq;
                for i in 0..seq {
                    let qi = &tq[(b * seq + i) * dm + h * head_dim..][..head_dim];
                    for j in 0..seq {
                        let kj = &tk[(b * seq + j) * dm + h * head_dim..][..head_dim];
                        let dot: S = qi.iter().zip(kj).map(|(&x, &y)| x * y).sum();
                        data[base + i * seq + j] = dot * scale;
                    }
                }
            }
        }
        let out = Tensor::new(&[batch, heads, seq, seq], data)?;
        Ok(self.push(out, Op::AttnScores { q, k, shape, scale }, &[q, k]))
    }

    /// Mixes value rows with attention weights `[batch, heads, seq, seq]`,
    /// returning `[batch·seq, heads·head_dim]`.
    pub fn attn_mix(&mut self, p: Var, v: Var, shape: AttnShape) -> Result<Var> {
        self.check_attn_operand(v, &shape, "attn_mix")?;
        if self.value(p).numel() != shape.scores_len() {
            bail!(Dimension, "attn_mix: weights {:?} do not fit {shape:?}", self.value(p).shape());
        }
        let AttnShape { batch, heads, seq, head_dim } = shape;
        let dm = shape.model_dim();
        let (tp, tv) = (self.value(p).data(), self.value(v).data());
        let mut data = vec![S::zero(); batch * seq * dm];
        for b in 0..batch {
            for h in 0..heads {
                let base = ((b * heads) + h) * seq * seq;
                for i in 0..seq {
                    let out = &mut data[(b * seq + i) * dm + h * head_dim..][..head_dim];
                    for j in 0..seq {
                        let w = tp[base + i * seq + j];
                        let vj = &tv[(b * seq + j) * dm + h * head_dim..][..head_dim];
                        for (o, &x) in out.iter_mut().zip(vj) {
                            *o += w * x;
                        }
                    }
                }
            }
        }
        let out = Tensor::new(&[batch * seq, dm], data)?;
        Ok(self.push(out, Op::AttnMix { p, v, shape }, &[p, v]))
    }

    /// Adds `table[bucket(i,j), h]` to every `scores[b, h, i, j]`.
    /// `buckets` is the row-major `seq×seq` bucket map; `table` is `[n_buckets, heads]`.
    pub fn add_rel_bias(&mut self, scores: Var, table: Var, buckets: &[usize]) -> Result<Var> {
        let shape = self.value(scores).shape().to_vec();
        if shape.len() != 4 || shape[2] != shape[3] {
            bail!(Dimension, "add_rel_bias: scores must be [batch, heads, seq, seq], got {shape:?}");
        }
        let (heads, seq) = (shape[1], shape[2]);
        let tt = self.value(table);
        if tt.shape().len() != 2 || tt.shape()[1] != heads {
            bail!(Dimension, "add_rel_bias: table {:?} does not have {heads} head columns", tt.shape());
        }
        let n_buckets = tt.shape()[0];
        if buckets.len() != seq * seq || buckets.iter().any(|&b| b >= n_buckets) {
            bail!(Dimension, "add_rel_bias: bucket map does not fit seq {seq} / {n_buckets} buckets");
        }
        let tab = tt.data().to_vec();
        let mut data = self.value(scores).data().to_vec();
        for (bh, block) in data.chunks_mut(seq * seq).enumerate() {
            let h = bh % heads;
            for (s, &bk) in block.iter_mut().zip(buckets) {
                *s += tab[bk * heads + h];
            }
        }
        let out = Tensor::new(&shape, data)?;
        let op = Op::RelBias { scores, table, buckets: buckets.to_vec(), heads };
        Ok(self.push(out, op, &[scores, table]))
    }

    /// `Σ w·(pred − target)² / Σ w` against a constant target.
    pub fn weighted_mse(&mut self, pred: Var, target: &[S], weights: &[S]) -> Result<Var> {
        let tp = self.value(pred);
        if target.len() != tp.numel() || weights.len() != tp.numel() {
            bail!(Dimension, "weighted_mse: pred has {} values, target {}, weights {}", tp.numel(), target.len(), weights.len());
        }
        let denom: S = weights.iter().copied().sum();
        if denom <= S::zero() {
            bail!(Contract, "weighted_mse: weights select nothing");
        }
        let sse: S = tp
            .data()
            .iter()
            .zip(target)
            .zip(weights)
            .map(|((&p, &t), &w)| w * (p - t) * (p - t))
            .sum();
        let out = Tensor::scalar(sse / denom);
        let op = Op::WeightedMse { pred, target: target.to_vec(), weights: weights.to_vec(), denom };
        Ok(self.push(out, op, &[pred]))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        if self.value(loss).numel() != 1 {
            bail!(Contract, "backward needs a scalar loss, got shape {:?}", self.value(loss).shape());
        }
        let mut grads: Vec<Option<Vec<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![S::one()]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<S>, g: &[S], grads: &mut [Option<Vec<S>>]) {
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        let val = |v: Var| self.nodes[v.0].value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -S::one() } else { S::one() };
                if rg(*a) {
                    for (o, &gi) in accumulate(grads, *a, g.len()).iter_mut().zip(g) {
                        *o += gi;
                    }
                }
                if rg(*b) {
                    for (o, &gi) in accumulate(grads, *b, g.len()).iter_mut().zip(g) {
                        *o += sign * gi;
                    }
                }
            }
            Op::Mul(a, b) => {
                if rg(*a) {
                    let bv = val(*b);
                    for ((o, &gi), &y) in accumulate(grads, *a, g.len()).iter_mut().zip(g).zip(bv) {
                        *o += gi * y;
                    }
                }
                if rg(*b) {
                    let av = val(*a);
                    for ((o, &gi), &x) in accumulate(grads, *b, g.len()).iter_mut().zip(g).zip(av) {
                        *o += gi * x;
                    }
                }
            }
            Op::AddRow(x, bias) => {
                if rg(*x) {
                    for (o, &gi) in accumulate(grads, *x, g.len()).iter_mut().zip(g) {
                        *o += gi;
                    }
                }
                if rg(*bias) {
                    let d = self.value(*bias).numel();
                    let gb = accumulate(grads, *bias, d);
                    for row in g.chunks(d) {
                        for (o, &gi) in gb.iter_mut().zip(row) {
                            *o += gi;
                        }
                    }
                }
            }
            Op::MulScalar(x, s) => {
                for (o, &gi) in accumulate(grads, *x, g.len()).iter_mut().zip(g) {
                    *o += *s * gi;
                }
            }
            Op::Relu(x) => {
                let xv = val(*x);
                for ((o, &gi), &xi) in accumulate(grads, *x, g.len()).iter_mut().zip(g).zip(xv) {
                    if xi > S::zero() {
                        *o += gi;
                    }
                }
            }
            Op::MatMul { a, b, m, k, n } => {
                if rg(*a) {
                    let bv = val(*b);
                    gemm_nt(g, bv, accumulate(grads, *a, m * k), *m, *n, *k);
                }
                if rg(*b) {
                    let av = val(*a);
                    gemm_tn(av, g, accumulate(grads, *b, k * n), *m, *k, *n);
                }
            }
            Op::Softmax(x) => {
                let y = node.value.data();
                let d = node.value.last_dim();
                let gx = accumulate(grads, *x, g.len());
                for ((gr, yr), or) in g.chunks(d).zip(y.chunks(d)).zip(gx.chunks_mut(d)) {
                    let dot: S = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    for ((o, &gi), &yi) in or.iter_mut().zip(gr).zip(yr) {
                        *o += yi * (gi - dot);
                    }
                }
            }
            Op::ScaleNorm { x, gamma, inv_rms } => {
                let xv = val(*x);
                let gam = val(*gamma);
                let d = gam.len();
                let dn = S::of(d as f64);
                if rg(*gamma) {
                    let gg = accumulate(grads, *gamma, d);
                    for ((gr, xr), &r) in g.chunks(d).zip(xv.chunks(d)).zip(inv_rms) {
                        for ((o, &gi), &xi) in gg.iter_mut().zip(gr).zip(xr) {
                            *o += gi * xi * r;
                        }
                    }
                }
                if rg(*x) {
                    let gx = accumulate(grads, *x, g.len());
                    for (((gr, xr), or), &r) in g.chunks(d).zip(xv.chunks(d)).zip(gx.chunks_mut(d)).zip(inv_rms) {
                        let proj: S = gr.iter().zip(gam).zip(xr).map(|((&gi, &ga), &xi)| gi * ga * xi).sum();
                        let coef = r * r * r * proj / dn;
                        for (((o, &gi), &ga), &xi) in or.iter_mut().zip(gr).zip(gam).zip(xr) {
                            *o += r * ga * gi - coef * xi;
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                for (o, &gi) in accumulate(grads, *x, g.len()).iter_mut().zip(g) {
                    *o += gi;
                }
            }
            Op::Sum(x) | Op::Mean(x) => {
                let n = self.value(*x).numel();
                let scale = if matches!(node.op, Op::Mean(_)) { g[0] / S::of(n as f64) } else { g[0] };
                for o in accumulate(grads, *x, n).iter_mut() {
                    *o += scale;
                }
            }
            Op::SelectRows { x, fill, keep } => {
                let d = self.value(*fill).numel();
                if rg(*x) {
                    let gx = accumulate(grads, *x, g.len());
                    for ((or, gr), &k) in gx.chunks_mut(d).zip(g.chunks(d)).zip(keep) {
                        if k {
                            for (o, &gi) in or.iter_mut().zip(gr) {
                                *o += gi;
                            }
                        }
                    }
                }
                if rg(*fill) {
                    let gf = accumulate(grads, *fill, d);
                    for (gr, &k) in g.chunks(d).zip(keep) {
                        if !k {
                            for (o, &gi) in gf.iter_mut().zip(gr) {
                                *o += gi;
                            }
                        }
                    }
                }
            }
            Op::AttnScores { q, k, shape, scale } => {
                let AttnShape { batch, heads, seq, head_dim } = *shape;
                let dm = shape.model_dim();
                let (qv, kv) = (val(*q), val(*k));
                let n = batch * seq * dm;
                for (target, other, wrt_q) in [(*q, kv, true), (*k, qv, false)] {
                    if !rg(target) {
                        continue;
                    }
                    let gt = accumulate(grads, target, n);
                    for b in 0..batch {
                        for h in 0..heads {
                            let base = ((b * heads) + h) * seq * seq;
                            for i in 0..seq {
                                for j in 0..seq {
                                    let gs = g[base + i * seq + j] * *scale;
                                    if gs == S::zero() {
                                        continue;
                                    }
                                    let (dst, src) = if wrt_q { (i, j) } else { (j, i) };
                                    let src_row = &other[(b * seq + src) * dm + h * head_dim..][..head_dim];
                                    let dst_row = &mut gt[(b * seq + dst) * dm + h * head_dim..][..head_dim];
                                    for (o, &x) in dst_row.iter_mut().zip(src_row) {
                                        *o += gs * x;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Op::AttnMix { p, v, shape } => {
                let AttnShape { batch, heads, seq, head_dim } = *shape;
                let dm = shape.model_dim();
                let (pv, vv) = (val(*p), val(*v));
                if rg(*p) {
                    let gp = accumulate(grads, *p, shape.scores_len());
                    for b in 0..batch {
                        for h in 0..heads {
                            let base = ((b * heads) + h) * seq * seq;
                            for i in 0..seq {
                                let go = &g[(b * seq + i) * dm + h * head_dim..][..head_dim];
                                for j in 0..seq {
                                    let vj = &vv[(b * seq + j) * dm + h * head_dim..][..head_dim];
                                    gp[base + i * seq + j] += go.iter().zip(vj).map(|(&a, &c)| a * c).sum::<S>();
                                }
                            }
                        }
                    }
                }
                if rg(*v) {
                    let gv = accumulate(grads, *v, batch * seq * dm);
                    for b in 0..batch {
                        for h in 0..heads {
                            let base = ((b * heads) + h) * seq * seq;
                            for i in 0..seq {
                                let go = &g[(b * seq + i) * dm + h * head_dim..][..head_dim];
                                for j in 0..seq {
                                    let w = pv[base + i * seq + j];
                                    let dst = &mut gv[(b * seq + j) * dm + h * head_dim..][..head_dim];
                                    for (o, &x) in dst.iter_mut().zip(go) {
                                        *o += w * x;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Op::RelBias { scores, table, buckets, heads } => {
                if rg(*scores) {
                    for (o, &gi) in accumulate(grads, *scores, g.len()).iter_mut().zip(g) {
                        *o += gi;
                    }
                }
                if rg(*table) {
                    let n = self.value(*table).numel();
                    let seq2 = buckets.len();
                    let gt = accumulate(grads, *table, n);
                    for (bh, block) in g.chunks(seq2).enumerate() {
                        let h = bh % heads;
                        for (&gi, &bk) in block.iter().zip(buckets) {
                            gt[bk * heads + h] += gi;
                        }
                    }
                }
            }
            Op::WeightedMse { pred, target, weights, denom } => {
                let pv = val(*pred);
                let two = S::of(2.0) * g[0] / *denom;
                let gp = accumulate(grads, *pred, pv.len());
                for (((o, &p), &t), &w) in gp.iter_mut().zip(pv).zip(target).zip(weights) {
                    *o += two * w * (p - t);
                }
            }
        }
    }
}
