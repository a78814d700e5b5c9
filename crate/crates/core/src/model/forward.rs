//! Deterministic CPU forward pass.
//!
//! Pre-norm blocks: `x → x + Attn(RMSNorm(x)) → x + FFN(RMSNorm(x))` with
//! rotary position embedding on queries and keys and a gated-SiLU FFN,
//! `FFN(z) = down · (silu(gate · z) ⊙ (up · z))`.

use crate::error::{Error, Result};
use crate::model::config::{LayerShape, ModelConfig};
use crate::model::weights::{LayerWeights, WeightStore};
use crate::scalar::{axpy, dot, Scalar};
use crate::tensor::{linear, Tensor};

/// Activations of one block, captured when tracing.
#[derive(Clone, Debug)]
pub struct LayerTrace<S = f32> {
    /// Residual stream entering the block `[seq, d_model]`.
    pub input: Tensor<S>,
    /// Residual stream after the attention sublayer.
    pub attn_out: Tensor<S>,
    /// Residual stream after the FFN sublayer (the block output).
    pub ffn_out: Tensor<S>,
    /// `silu(gate·z) ⊙ (up·z)` `[seq, d_ff]`.
    pub ffn_act: Tensor<S>,
    /// Attention-weighted value rows per head, each `[seq, v_dim]`.
    pub head_values: Vec<Tensor<S>>,
}

#[derive(Clone, Debug)]
pub struct ForwardTrace<S = f32> {
    pub layers: Vec<LayerTrace<S>>,
    pub logits: Tensor<S>,
}

pub fn rms_norm_row<S: Scalar>(x: &[S], weight: &[S], eps: f64, out: &mut [S]) {
    let ms = x.iter().map(|v| v.widen() * v.widen()).sum::<f64>() / x.len().max(1) as f64;
    let inv = 1.0 / (ms + eps).sqrt();
    for ((o, xi), wi) in out.iter_mut().zip(x).zip(weight) {
        *o = S::narrow(xi.widen() * inv) * *wi;
    }
}

pub fn rms_norm<S: Scalar>(x: &Tensor<S>, weight: &Tensor<S>, eps: f64) -> Tensor<S> {
    let mut out = Tensor::zeros(x.shape());
    for r in 0..x.rows() {
        rms_norm_row(x.row(r), weight.data(), eps, out.row_mut(r));
    }
    out
}

#[inline]
pub fn silu<S: Scalar>(z: S) -> S {
    z / (S::one() + (-z).exp())
}

/// Rotary cos/sin tables for positions `0..len`, rotate-half layout.
pub struct Rope<S> {
    half: usize,
    cos: Vec<S>,
    sin: Vec<S>,
}

impl<S: Scalar> Rope<S> {
    pub fn new(head_dim: usize, base: f64, len: usize) -> Self {
        let half = head_dim / 2;
        let mut cos = Vec::with_capacity(len * half);
        let mut sin = Vec::with_capacity(len * half);
        for pos in 0..len {
            for i in 0..half {
                let theta = base.powf(-2.0 * i as f64 / head_dim as f64);
                let angle = pos as f64 * theta;
                cos.push(S::narrow(angle.cos()));
                sin.push(S::narrow(angle.sin()));
            }
        }
        Self { half, cos, sin }
    }

    /// Rotate one head's vector in place for position `pos`.
    pub fn apply(&self, v: &mut [S], pos: usize) {
        let h = self.half;
        let (c, s) = (&self.cos[pos * h..(pos + 1) * h], &self.sin[pos * h..(pos + 1) * h]);
        for i in 0..h {
            let (a, b) = (v[i], v[i + h]);
            v[i] = a * c[i] - b * s[i];
            v[i + h] = a * s[i] + b * c[i];
        }
    }
}

/// Softmax over `scores` with max-shift and f64 accumulation.
pub fn softmax_f64<S: Scalar>(scores: &[S], out: &mut Vec<f64>) {
    out.clear();
    let m = scores.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.widen()));
    out.extend(scores.iter().map(|v| (v.widen() - m).exp()));
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
}

/// Attention sublayer: returns `x + Attn(RMSNorm(x))` and, if requested,
/// the attention-weighted value rows of every head.
pub fn attention_sublayer<S: Scalar>(
    config: &ModelConfig,
    lw: &LayerWeights<'_, S>,
    shape: &LayerShape,
    x: &Tensor<S>,
    rope: &Rope<S>,
    capture: bool,
) -> (Tensor<S>, Vec<Tensor<S>>) {
    let seq = x.rows();
    let hd = config.head_dim;
    let normed = rms_norm(x, lw.norm1, config.norm_eps);
    let v = linear(&normed, lw.wv);
    let v_total = shape.v_total();
    let mut mixed = Tensor::<S>::zeros(&[seq, v_total]);
    let live = shape.v_dims.iter().any(|&d| d > 0);
    if live {
        let mut q = linear(&normed, lw.wq);
        let mut k = linear(&normed, lw.wk);
        for t in 0..seq {
            for h in 0..shape.n_heads() {
                rope.apply(&mut q.row_mut(t)[h * hd..(h + 1) * hd], t);
                rope.apply(&mut k.row_mut(t)[h * hd..(h + 1) * hd], t);
            }
        }
        let scale = S::narrow(1.0 / (hd as f64).sqrt());
        let mut scores = Vec::with_capacity(seq);
        let mut probs = Vec::with_capacity(seq);
        for (h, &vd) in shape.v_dims.iter().enumerate() {
            if vd == 0 {
                continue;
            }
            let off = shape.v_offset(h);
            for t in 0..seq {
                let qt = &q.row(t)[h * hd..(h + 1) * hd];
                scores.clear();
                scores.extend((0..=t).map(|u| dot(qt, &k.row(u)[h * hd..(h + 1) * hd]) * scale));
                softmax_f64(&scores, &mut probs);
                let out = &mut mixed.row_mut(t)[off..off + vd];
                for (u, &p) in probs.iter().enumerate() {
                    axpy(S::narrow(p), &v.row(u)[off..off + vd], out);
                }
            }
        }
    }
    let heads = if capture {
        shape
            .v_dims
            .iter()
            .enumerate()
            .map(|(h, &vd)| {
                let off = shape.v_offset(h);
                let mut t = Tensor::zeros(&[seq, vd]);
                for r in 0..seq {
                    t.row_mut(r).copy_from_slice(&mixed.row(r)[off..off + vd]);
                }
                t
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut out = x.clone();
    if live {
        let attn = linear(&mixed, lw.wo);
        for (o, a) in out.data_mut().iter_mut().zip(attn.data()) {
            *o += *a;
        }
    }
    (out, heads)
}

/// FFN sublayer: returns `x + FFN(RMSNorm(x))` and the gated activations.
pub fn ffn_sublayer<S: Scalar>(
    config: &ModelConfig,
    lw: &LayerWeights<'_, S>,
    x: &Tensor<S>,
) -> (Tensor<S>, Tensor<S>) {
    let normed = rms_norm(x, lw.norm2, config.norm_eps);
    let mut act = linear(&normed, lw.gate);
    let up = linear(&normed, lw.up);
    for (g, u) in act.data_mut().iter_mut().zip(up.data()) {
        *g = silu(*g) * *u;
    }
    let mut out = x.clone();
    if act.cols() > 0 {
        let f = linear(&act, lw.down);
        for (o, v) in out.data_mut().iter_mut().zip(f.data()) {
            *o += *v;
        }
    }
    (out, act)
}

fn check_input(config: &ModelConfig, ids: &[u32]) -> Result<()> {
    if ids.len() > config.max_seq_len {
        return Err(Error::SequenceTooLong {
            len: ids.len(),
            max: config.max_seq_len,
        });
    }
    if let Some(&id) = ids.iter().find(|&&id| id as usize >= config.vocab_size) {
        return Err(Error::TokenOutOfRange {
            id,
            vocab_size: config.vocab_size,
        });
    }
    Ok(())
}

fn check_shapes<S: Scalar>(config: &ModelConfig, weights: &WeightStore<S>) -> Result<()> {
    for (name, shape) in config.tensor_shapes() {
        let t = weights.get(&name)?;
        if t.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch {
                name,
                expected: shape,
                found: t.shape().to_vec(),
            });
        }
    }
    Ok(())
}

/// Embed `ids` into the residual stream.
pub fn embed<S: Scalar>(weights: &WeightStore<S>, d_model: usize, ids: &[u32]) -> Result<Tensor<S>> {
    let table = weights.get("embed")?;
    let mut x = Tensor::zeros(&[ids.len(), d_model]);
    for (t, &id) in ids.iter().enumerate() {
        x.row_mut(t).copy_from_slice(table.row(id as usize));
    }
    Ok(x)
}

/// Run one block, optionally capturing its activations.
pub fn block<S: Scalar>(
    config: &ModelConfig,
    weights: &WeightStore<S>,
    layer: usize,
    x: &Tensor<S>,
    rope: &Rope<S>,
    capture: bool,
) -> Result<(Tensor<S>, Option<LayerTrace<S>>)> {
    let lw = weights.layer(layer)?;
    let shape = config.layer_shape(layer);
    let (attn_out, head_values) = attention_sublayer(config, &lw, &shape, x, rope, capture);
    let (ffn_out, ffn_act) = ffn_sublayer(config, &lw, &attn_out);
    let trace = capture.then(|| LayerTrace {
        input: x.clone(),
        attn_out: attn_out.clone(),
        ffn_out: ffn_out.clone(),
        ffn_act,
        head_values,
    });
    Ok((ffn_out, trace))
}

/// Logits `[seq, vocab_size]` and, with `trace`, every block's activations.
pub fn forward<S: Scalar>(
    config: &ModelConfig,
    weights: &WeightStore<S>,
    ids: &[u32],
    trace: bool,
) -> Result<(Tensor<S>, Option<ForwardTrace<S>>)> {
    check_input(config, ids)?;
    check_shapes(config, weights)?;
    let rope = Rope::new(config.head_dim, config.rope_base, ids.len());
    let mut x = embed(weights, config.d_model, ids)?;
    let mut layers = Vec::with_capacity(if trace { config.n_layers } else { 0 });
    for l in 0..config.n_layers {
        let (next, lt) = block(config, weights, l, &x, &rope, trace)?;
        layers.extend(lt);
        x = next;
    }
    let normed = rms_norm(&x, weights.get("final_norm")?, config.norm_eps);
    let logits = linear(&normed, weights.get("unembed")?);
    let trace = trace.then(|| ForwardTrace {
        layers,
        logits: logits.clone(),
    });
    Ok((logits, trace))
}

/// Log-softmax of one logit row, accumulated in f64.
pub fn log_softmax_row<S: Scalar>(row: &[S]) -> Vec<f64> {
    let m = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.widen()));
    let lse = m + row.iter().map(|v| (v.widen() - m).exp()).sum::<f64>().ln();
    row.iter().map(|v| v.widen() - lse).collect()
}

/// Per-position next-token log-probabilities `[seq, vocab_size]`.
pub fn logprobs<S: Scalar>(config: &ModelConfig, weights: &WeightStore<S>, ids: &[u32]) -> Result<Tensor<f64>> {
    let (logits, _) = forward(config, weights, ids, false)?;
    let mut out = Vec::with_capacity(logits.numel());
    for r in 0..logits.rows() {
        out.extend(log_softmax_row(logits.row(r)));
    }
    Tensor::from_vec(&[logits.rows(), logits.cols()], out)
}

/// Greedy continuation of `prompt` by up to `max_new` tokens.
pub fn greedy_decode<S: Scalar>(
    config: &ModelConfig,
    weights: &WeightStore<S>,
    prompt: &[u32],
    max_new: usize,
) -> Result<Vec<u32>> {
    let mut ids = prompt.to_vec();
    let mut generated = Vec::new();
    for _ in 0..max_new {
        if ids.is_empty() || ids.len() >= config.max_seq_len {
            break;
        }
        let (logits, _) = forward(config, weights, &ids, false)?;
        let last = logits.row(logits.rows() - 1);
        let mut best = 0;
        for (i, v) in last.iter().enumerate() {
            if *v > last[best] {
                best = i;
            }
        }
        ids.push(best as u32);
        generated.push(best as u32);
    }
    Ok(generated)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rms_norm_of_constant_vector_is_unit() {
        let mut out = [0.0f32; 4];
        rms_norm_row(&[2.0f32; 4], &[1.0; 4], 0.0, &mut out);
        assert_eq!(out, [1.0; 4]);
    }

    #[test]
    fn rope_preserves_norm_and_is_identity_at_zero() {
        let rope = Rope::<f64>::new(8, 10000.0, 4);
        let v0: Vec<f64> = (0..8).map(|i| i as f64 - 3.5).collect();
        let mut v = v0.clone();
        rope.apply(&mut v, 0);
        assert_eq!(v, v0);
        rope.apply(&mut v, 3);
        let n0: f64 = v0.iter().map(|x| x * x).sum();
        let n1: f64 = v.iter().map(|x| x * x).sum();
        assert!((n0 - n1).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_normalized_under_large_logits() {
        let mut p = Vec::new();
        softmax_f64(&[1e4f32, 0.0, 0.0], &mut p);
        assert!((p[0] - 1.0).abs() < 1e-12);
        let lp = log_softmax_row(&[0.0f32; 256]);
        assert!((lp[17] + (256f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = ModelConfig::dense(1, 8, 2, 8, 10, 4);
        let w = WeightStore::<f32>::zeros_for(&c);
        assert!(matches!(
            forward(&c, &w, &[10], false),
            Err(Error::TokenOutOfRange { id: 10, .. })
        ));
        assert!(matches!(
            forward(&c, &w, &[1; 5], false),
            Err(Error::SequenceTooLong { len: 5, max: 4 })
        ));
    }
}
