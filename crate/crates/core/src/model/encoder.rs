//! Forward pass, cross-entropy loss and exact backpropagation.
//!
//! A batch is processed by stacking the real (unpadded) tokens of every
//! example into one `rows × hidden` matrix so the projections run as a
//! single GEMM; attention is then computed per example and head over
//! strided views of the stacked Q/K/V.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernels::{
    gelu, gelu_grad, gemm, layer_norm, layer_norm_backward, linear, linear_backward, masked_softmax, NormCache, Real,
    View,
};
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::tokenizer::EncodedInput;

/// Attention of one head over the real tokens of one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap<T> {
    /// Real (unpadded) length `n`; positions at or beyond it receive 0.
    pub len: usize,
    /// Row-major `n × n` weights.
    pub weights: Vec<T>,
}

impl<T: Real> AttentionMap<T> {
    pub fn get(&self, query: usize, key: usize) -> T {
        if query < self.len && key < self.len {
            self.weights[query * self.len + key]
        } else {
            T::zero()
        }
    }

    pub fn row(&self, query: usize) -> &[T] {
        &self.weights[query * self.len..(query + 1) * self.len]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    pub logits: Vec<T>,
    /// `attentions[layer][head]`; empty when retention is off.
    pub attentions: Vec<Vec<AttentionMap<T>>>,
    pub cls_hidden: Vec<T>,
}

/// Number of leading positions up to and including the last unmasked one.
pub fn real_length(input: &EncodedInput) -> usize {
    input.attention_mask.iter().rposition(|&m| m != 0).map_or(0, |p| p + 1)
}

struct Batch<'a> {
    inputs: Vec<&'a EncodedInput>,
    lens: Vec<usize>,
    starts: Vec<usize>,
    rows: usize,
}

impl<'a> Batch<'a> {
    fn new<T: Real>(params: &ModelParams<T>, inputs: Vec<&'a EncodedInput>) -> Result<Self> {
        let config = params.config();
        let mut lens = Vec::with_capacity(inputs.len());
        let mut starts = Vec::with_capacity(inputs.len());
        let mut rows = 0;
        for input in &inputs {
            let width = input.ids.len();
            if width > config.max_positions {
                return Err(Error::Shape(format!(
                    "input of {width} positions exceeds the model's {}",
                    config.max_positions
                )));
            }
            if input.segment_ids.len() != width || input.attention_mask.len() != width {
                return Err(Error::Shape("ids, segment ids and mask differ in length".into()));
            }
            if let Some(&id) = input.ids.iter().find(|&&id| id as usize >= config.vocab_size) {
                return Err(Error::Shape(format!("token id {id} outside vocabulary of {}", config.vocab_size)));
            }
            if input.segment_ids.iter().any(|&s| s > 1) {
                return Err(Error::Shape("segment id outside {0, 1}".into()));
            }
            let n = real_length(input);
            if n == 0 {
                return Err(Error::Shape("input has no unmasked position".into()));
            }
            starts.push(rows);
            lens.push(n);
            rows += n;
        }
        Ok(Self { inputs, lens, starts, rows })
    }
}

struct LayerCache<T> {
    input: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// Softmax output per example and head, `n × n` blocks.
    probs: Vec<T>,
    probs_drop: Option<Vec<T>>,
    ctx: Vec<T>,
    attn_drop: Option<Vec<T>>,
    norm1: NormCache<T>,
    h1: Vec<T>,
    ff_pre: Vec<T>,
    ff_act: Vec<T>,
    ff_drop: Option<Vec<T>>,
    norm2: NormCache<T>,
}

struct Activations<T> {
    emb_drop: Option<Vec<T>>,
    layers: Vec<LayerCache<T>>,
    /// Final hidden states of the `[CLS]` rows, `batch × hidden`.
    cls: Vec<T>,
    logits: Vec<T>,
    prob_offsets: Vec<usize>,
}

fn dropout_mask<T: Real>(rng: &mut Option<&mut ChaCha8Rng>, len: usize, p: f64) -> Option<Vec<T>> {
    let rng = rng.as_mut()?;
    if p == 0.0 {
        return None;
    }
    let keep = T::from_f64(1.0 / (1.0 - p));
    Some((0..len).map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep }).collect())
}

fn apply_mask<T: Real>(x: &mut [T], mask: &Option<Vec<T>>) {
    if let Some(m) = mask {
        x.iter_mut().zip(m).for_each(|(v, s)| *v = *v * *s);
    }
}

fn run<T: Real>(params: &ModelParams<T>, batch: &Batch, mut rng: Option<&mut ChaCha8Rng>) -> Activations<T> {
    let config = params.config();
    let off = params.offsets();
    let w = &params.data;
    let d = config.hidden;
    let heads = config.heads;
    let dh = config.head_dim();
    let rows = batch.rows;
    let p = config.dropout;
    let scale = T::from_f64(1.0 / (dh as f64).sqrt());

    let mut x = vec![T::zero(); rows * d];
    for (b, input) in batch.inputs.iter().enumerate() {
        for pos in 0..batch.lens[b] {
            let row = &mut x[(batch.starts[b] + pos) * d..][..d];
            let tok = &w[off.token + input.ids[pos] as usize * d..][..d];
            let posv = &w[off.position + pos * d..][..d];
            let seg = &w[off.segment + input.segment_ids[pos] as usize * d..][..d];
            for j in 0..d {
                row[j] = tok[j] + posv[j] + seg[j];
            }
        }
    }
    let emb_drop = dropout_mask(&mut rng, x.len(), p);
    apply_mask(&mut x, &emb_drop);

    let mut prob_offsets = Vec::with_capacity(batch.lens.len() + 1);
    let mut total = 0;
    for &n in &batch.lens {
        prob_offsets.push(total);
        total += heads * n * n;
    }
    prob_offsets.push(total);

    let mut layers = Vec::with_capacity(config.layers);
    for lo in &off.layers {
        let q = linear(&x, &w[lo.q_w..lo.q_w + d * d], &w[lo.q_b..lo.q_b + d], rows, d, d);
        let k = linear(&x, &w[lo.k_w..lo.k_w + d * d], &w[lo.k_b..lo.k_b + d], rows, d, d);
        let v = linear(&x, &w[lo.v_w..lo.v_w + d * d], &w[lo.v_b..lo.v_b + d], rows, d, d);
        let mut probs = vec![T::zero(); total];
        let probs_drop = dropout_mask(&mut rng, total, p);
        let mut ctx = vec![T::zero(); rows * d];
        let mut used = Vec::new();
        for (b, input) in batch.inputs.iter().enumerate() {
            let n = batch.lens[b];
            let start = batch.starts[b];
            let keep = &input.attention_mask[..n];
            for h in 0..heads {
                let block = prob_offsets[b] + h * n * n;
                let s = &mut probs[block..block + n * n];
                let head_view = View::strided(start * d + h * dh, d, 1);
                gemm(n, dh, n, scale, &q, head_view, &k, View::strided(start * d + h * dh, 1, d), T::zero(), s, View::rows(0, n));
                for row in s.chunks_exact_mut(n) {
                    masked_softmax(row, keep);
                }
                let pv: &[T] = match &probs_drop {
                    Some(m) => {
                        used.clear();
                        used.extend(s.iter().zip(&m[block..block + n * n]).map(|(a, b)| *a * *b));
                        &used
                    }
                    None => s,
                };
                gemm(n, n, dh, T::one(), pv, View::rows(0, n), &v, head_view, T::zero(), &mut ctx, head_view);
            }
        }
        let mut attn = linear(&ctx, &w[lo.o_w..lo.o_w + d * d], &w[lo.o_b..lo.o_b + d], rows, d, d);
        let attn_drop = dropout_mask(&mut rng, attn.len(), p);
        apply_mask(&mut attn, &attn_drop);
        attn.iter_mut().zip(&x).for_each(|(a, r)| *a = *a + *r);
        let (h1, norm1) = layer_norm(&attn, &w[lo.ln1_g..lo.ln1_g + d], &w[lo.ln1_b..lo.ln1_b + d], d);

        let ff = config.ff;
        let ff_pre = linear(&h1, &w[lo.ff1_w..lo.ff1_w + d * ff], &w[lo.ff1_b..lo.ff1_b + ff], rows, d, ff);
        let ff_act: Vec<T> = ff_pre.iter().map(|&v| gelu(v)).collect();
        let mut f2 = linear(&ff_act, &w[lo.ff2_w..lo.ff2_w + ff * d], &w[lo.ff2_b..lo.ff2_b + d], rows, ff, d);
        let ff_drop = dropout_mask(&mut rng, f2.len(), p);
        apply_mask(&mut f2, &ff_drop);
        f2.iter_mut().zip(&h1).for_each(|(a, r)| *a = *a + *r);
        let (out, norm2) = layer_norm(&f2, &w[lo.ln2_g..lo.ln2_g + d], &w[lo.ln2_b..lo.ln2_b + d], d);

        let input = std::mem::replace(&mut x, out);
        layers.push(LayerCache {
            input,
            q,
            k,
            v,
            probs,
            probs_drop,
            ctx,
            attn_drop,
            norm1,
            h1,
            ff_pre,
            ff_act,
            ff_drop,
            norm2,
        });
    }

    let c = config.n_classes;
    let mut cls = Vec::with_capacity(batch.lens.len() * d);
    for &start in &batch.starts {
        cls.extend_from_slice(&x[start * d..(start + 1) * d]);
    }
    let logits = linear(&cls, &w[off.cls_w..off.cls_w + d * c], &w[off.cls_b..off.cls_b + c], batch.lens.len(), d, c);
    Activations { emb_drop, layers, cls, logits, prob_offsets }
}

impl<T: Real> ModelParams<T> {
    /// Runs the encoder on one input. `rng` enables dropout (training
    /// mode); `None` is deterministic inference.
    pub fn forward(&self, input: &EncodedInput, rng: Option<&mut ChaCha8Rng>) -> Result<ForwardTrace<T>> {
        let batch = Batch::new(self, vec![input])?;
        let acts = run(self, &batch, rng);
        let n = batch.lens[0];
        let heads = self.config().heads;
        let attentions = acts
            .layers
            .iter()
            .map(|layer| {
                (0..heads)
                    .map(|h| AttentionMap { len: n, weights: layer.probs[h * n * n..(h + 1) * n * n].to_vec() })
                    .collect()
            })
            .collect();
        Ok(ForwardTrace { logits: acts.logits, attentions, cls_hidden: acts.cls })
    }

    /// Inference logits for many inputs, one row per input.
    pub fn logits_batch(&self, inputs: &[&EncodedInput]) -> Result<Vec<Vec<T>>> {
        let batch = Batch::new(self, inputs.to_vec())?;
        let acts = run(self, &batch, None);
        Ok(acts.logits.chunks(self.config().n_classes).map(<[T]>::to_vec).collect())
    }

    /// Mean cross-entropy over the batch and its exact gradient, laid out
    /// like [`ModelParams::data`].
    pub fn loss_and_grad(
        &self,
        batch: &[(&EncodedInput, usize)],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(T, Vec<T>)> {
        if batch.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        let c = self.config().n_classes;
        if let Some((_, label)) = batch.iter().find(|(_, l)| *l >= c) {
            return Err(Error::Shape(format!("label {label} outside {c} classes")));
        }
        let prepared = Batch::new(self, batch.iter().map(|(x, _)| *x).collect())?;
        let acts = run(self, &prepared, rng);

        let inv_b = T::from_f64(1.0 / batch.len() as f64);
        let mut loss = T::zero();
        let mut dlogits = vec![T::zero(); acts.logits.len()];
        for (b, (_, label)) in batch.iter().enumerate() {
            let z = &acts.logits[b * c..(b + 1) * c];
            let max = z.iter().copied().fold(T::neg_infinity(), T::max);
            let sum = z.iter().fold(T::zero(), |a, &v| a + (v - max).exp());
            let lse = max + sum.ln();
            loss = loss + (lse - z[*label]);
            for j in 0..c {
                let pj = (z[j] - lse).exp();
                let target = if j == *label { T::one() } else { T::zero() };
                dlogits[b * c + j] = (pj - target) * inv_b;
            }
        }
        let grad = backward(self, &prepared, &acts, &dlogits);
        Ok((loss * inv_b, grad))
    }
}

fn backward<T: Real>(params: &ModelParams<T>, batch: &Batch, acts: &Activations<T>, dlogits: &[T]) -> Vec<T> {
    let config = params.config();
    let off = params.offsets();
    let w = &params.data;
    let d = config.hidden;
    let ff = config.ff;
    let heads = config.heads;
    let dh = config.head_dim();
    let c = config.n_classes;
    let rows = batch.rows;
    let bsz = batch.lens.len();
    let scale = T::from_f64(1.0 / (dh as f64).sqrt());
    let mut g = vec![T::zero(); w.len()];

    let (gw, rest) = g[off.cls_w..].split_at_mut(d * c);
    let dcls = linear_backward(&acts.cls, &w[off.cls_w..off.cls_w + d * c], dlogits, gw, &mut rest[..c], bsz, d, c);
    let mut dx = vec![T::zero(); rows * d];
    for (b, &start) in batch.starts.iter().enumerate() {
        dx[start * d..(start + 1) * d].copy_from_slice(&dcls[b * d..(b + 1) * d]);
    }

    let mut scratch_dp = Vec::new();
    let mut scratch_used = Vec::new();
    for (lo, cache) in off.layers.iter().zip(&acts.layers).rev() {
        // Second residual block.
        let (gg, gb) = two_slices(&mut g, lo.ln2_g, lo.ln2_b, d);
        let dr2 = layer_norm_backward(&dx, &cache.norm2, &w[lo.ln2_g..lo.ln2_g + d], gg, gb, d);
        let mut df2 = dr2.clone();
        apply_mask(&mut df2, &cache.ff_drop);
        let (gw, gb) = two_slices(&mut g, lo.ff2_w, lo.ff2_b, ff * d);
        let mut dact = linear_backward(&cache.ff_act, &w[lo.ff2_w..lo.ff2_w + ff * d], &df2, gw, &mut gb[..d], rows, ff, d);
        dact.iter_mut().zip(&cache.ff_pre).for_each(|(g, &x)| *g = *g * gelu_grad(x));
        let (gw, gb) = two_slices(&mut g, lo.ff1_w, lo.ff1_b, d * ff);
        let dh1_ff = linear_backward(&cache.h1, &w[lo.ff1_w..lo.ff1_w + d * ff], &dact, gw, &mut gb[..ff], rows, d, ff);
        let dh1: Vec<T> = dr2.iter().zip(&dh1_ff).map(|(a, b)| *a + *b).collect();

        // First residual block.
        let (gg, gb) = two_slices(&mut g, lo.ln1_g, lo.ln1_b, d);
        let dr1 = layer_norm_backward(&dh1, &cache.norm1, &w[lo.ln1_g..lo.ln1_g + d], gg, gb, d);
        let mut da = dr1.clone();
        apply_mask(&mut da, &cache.attn_drop);
        let (gw, gb) = two_slices(&mut g, lo.o_w, lo.o_b, d * d);
        let dctx = linear_backward(&cache.ctx, &w[lo.o_w..lo.o_w + d * d], &da, gw, &mut gb[..d], rows, d, d);

        let mut dq = vec![T::zero(); rows * d];
        let mut dk = vec![T::zero(); rows * d];
        let mut dv = vec![T::zero(); rows * d];
        for b in 0..bsz {
            let n = batch.lens[b];
            let start = batch.starts[b];
            for h in 0..heads {
                let block = acts.prob_offsets[b] + h * n * n;
                let probs = &cache.probs[block..block + n * n];
                let drop = cache.probs_drop.as_ref().map(|m| &m[block..block + n * n]);
                let used: &[T] = match drop {
                    Some(m) => {
                        scratch_used.clear();
                        scratch_used.extend(probs.iter().zip(m).map(|(a, b)| *a * *b));
                        &scratch_used
                    }
                    None => probs,
                };
                let hv = View::strided(start * d + h * dh, d, 1);
                let hv_t = View::strided(start * d + h * dh, 1, d);
                scratch_dp.resize(n * n, T::zero());
                // dP = dctx Vᵀ, dV = Pᵀ dctx
                gemm(n, dh, n, T::one(), &dctx, hv, &cache.v, hv_t, T::zero(), &mut scratch_dp, View::rows(0, n));
                gemm(n, n, dh, T::one(), used, View::transposed(0, n), &dctx, hv, T::zero(), &mut dv, hv);
                if let Some(m) = drop {
                    scratch_dp.iter_mut().zip(m).for_each(|(a, s)| *a = *a * *s);
                }
                for (prow, dprow) in probs.chunks_exact(n).zip(scratch_dp.chunks_exact_mut(n)) {
                    let dot = prow.iter().zip(dprow.iter()).fold(T::zero(), |a, (p, g)| a + *p * *g);
                    for (gv, &pv) in dprow.iter_mut().zip(prow) {
                        *gv = pv * (*gv - dot) * scale;
                    }
                }
                // dQ = dS K, dK = dSᵀ Q
                gemm(n, n, dh, T::one(), &scratch_dp, View::rows(0, n), &cache.k, hv, T::zero(), &mut dq, hv);
                gemm(n, n, dh, T::one(), &scratch_dp, View::transposed(0, n), &cache.q, hv, T::zero(), &mut dk, hv);
            }
        }

        let mut dinput = dr1;
        for (dproj, wo, bo) in [(&dq, lo.q_w, lo.q_b), (&dk, lo.k_w, lo.k_b), (&dv, lo.v_w, lo.v_b)] {
            let (gw, gb) = two_slices(&mut g, wo, bo, d * d);
            let part = linear_backward(&cache.input, &w[wo..wo + d * d], dproj, gw, &mut gb[..d], rows, d, d);
            dinput.iter_mut().zip(&part).for_each(|(a, b)| *a = *a + *b);
        }
        dx = dinput;
    }

    apply_mask(&mut dx, &acts.emb_drop);
    for (b, input) in batch.inputs.iter().enumerate() {
        for pos in 0..batch.lens[b] {
            let row = &dx[(batch.starts[b] + pos) * d..][..d];
            for (base, idx) in [
                (off.token, input.ids[pos] as usize),
                (off.position, pos),
                (off.segment, input.segment_ids[pos] as usize),
            ] {
                let dst = &mut g[base + idx * d..][..d];
                dst.iter_mut().zip(row).for_each(|(a, b)| *a = *a + *b);
            }
        }
    }
    g
}

/// Disjoint mutable views of `g[a..a+len_a]` and `g[b..]` with `a < b`.
fn two_slices<T>(g: &mut [T], a: usize, b: usize, len_a: usize) -> (&mut [T], &mut [T]) {
    debug_assert!(a + len_a <= b);
    let (left, right) = g.split_at_mut(b);
    (&mut left[a..a + len_a], right)
}
