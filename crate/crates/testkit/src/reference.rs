//! Straight-line f64 forward and backward pass over plain row-major buffers.
//!
//! Shares only the weight containers with the library, never its math.

use cusprune::model::{names, ModelConfig, WeightStore};
use cusprune::tensor::Tensor;
use cusprune::Scalar;

/// `x[rows, cin] · wᵀ` with `w: [cout, cin]`.
fn matmul(x: &[f64], rows: usize, w: &Tensor<f64>) -> Vec<f64> {
    let cout = w.shape()[0];
    let cin = w.shape()[1];
    let wd = w.data();
    let mut y = vec![0.0; rows * cout];
    for r in 0..rows {
        for o in 0..cout {
            let mut s = 0.0;
            for i in 0..cin {
                s += x[r * cin + i] * wd[o * cin + i];
            }
            y[r * cout + o] = s;
        }
    }
    y
}

/// Given `dy = ∂L/∂(x·wᵀ)`, accumulate `∂L/∂w` and return `∂L/∂x`.
fn matmul_back(dy: &[f64], x: &[f64], rows: usize, w: &Tensor<f64>, dw: &mut Tensor<f64>) -> Vec<f64> {
    let cout = w.shape()[0];
    let cin = w.shape()[1];
    let wd = w.data();
    let dwd = dw.data_mut();
    let mut dx = vec![0.0; rows * cin];
    for r in 0..rows {
        for o in 0..cout {
            let g = dy[r * cout + o];
            if g == 0.0 {
                continue;
            }
            for i in 0..cin {
                dx[r * cin + i] += g * wd[o * cin + i];
                dwd[o * cin + i] += g * x[r * cin + i];
            }
        }
    }
    dx
}

fn rmsnorm(x: &[f64], rows: usize, w: &Tensor<f64>, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let d = w.numel();
    let mut y = vec![0.0; rows * d];
    let mut inv = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let ms = row.iter().map(|v| v * v).sum::<f64>() / d as f64;
        inv[r] = 1.0 / (ms + eps).sqrt();
        for i in 0..d {
            y[r * d + i] = row[i] * inv[r] * w.data()[i];
        }
    }
    (y, inv)
}

fn rmsnorm_back(dy: &[f64], x: &[f64], inv: &[f64], w: &Tensor<f64>, dw: &mut Tensor<f64>) -> Vec<f64> {
    let d = w.numel();
    let mut dx = vec![0.0; x.len()];
    for (r, &ri) in inv.iter().enumerate() {
        let xs = &x[r * d..(r + 1) * d];
        let gs = &dy[r * d..(r + 1) * d];
        let mut s = 0.0;
        for i in 0..d {
            dw.data_mut()[i] += gs[i] * xs[i] * ri;
            s += gs[i] * w.data()[i] * xs[i];
        }
        for i in 0..d {
            dx[r * d + i] = ri * w.data()[i] * gs[i] - ri * ri * ri * xs[i] * s / d as f64;
        }
    }
    dx
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Rotate (or with `inverse`, un-rotate) every head of every row.
fn rope(x: &mut [f64], rows: usize, heads: usize, hd: usize, base: f64, inverse: bool) {
    let half = hd / 2;
    let width = heads * hd;
    for t in 0..rows {
        for h in 0..heads {
            let v = &mut x[t * width + h * hd..t * width + (h + 1) * hd];
            for i in 0..half {
                let angle = t as f64 * base.powf(-2.0 * i as f64 / hd as f64);
                let (c, s) = (angle.cos(), if inverse { -angle.sin() } else { angle.sin() });
                let (a, b) = (v[i], v[i + half]);
                v[i] = a * c - b * s;
                v[i + half] = a * s + b * c;
            }
        }
    }
}

pub struct LayerCache {
    x_in: Vec<f64>,
    n1: Vec<f64>,
    inv1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// `probs[h][t]` over positions `0..=t`; empty for dead heads.
    probs: Vec<Vec<Vec<f64>>>,
    mixed: Vec<f64>,
    x_mid: Vec<f64>,
    n2: Vec<f64>,
    inv2: Vec<f64>,
    g: Vec<f64>,
    u: Vec<f64>,
    a: Vec<f64>,
}

pub struct Cache {
    pub ids: Vec<u32>,
    layers: Vec<LayerCache>,
    x_final: Vec<f64>,
    nf: Vec<f64>,
    inv_f: Vec<f64>,
    /// `[seq, vocab]` row-major.
    pub logits: Vec<f64>,
}

impl Cache {
    /// Residual stream `[seq, d_model]` entering block `l`; `l == n_layers`
    /// gives the stream after the last block.
    pub fn residual(&self, l: usize) -> &[f64] {
        self.layers.get(l).map_or(&self.x_final, |c| &c.x_in)
    }
}

pub fn run(config: &ModelConfig, w: &WeightStore<f64>, ids: &[u32]) -> Cache {
    let d = config.d_model;
    let hd = config.head_dim;
    let t_len = ids.len();
    let eps = config.norm_eps;
    let embed = w.get("embed").unwrap();
    let mut x = vec![0.0; t_len * d];
    for (t, &id) in ids.iter().enumerate() {
        x[t * d..(t + 1) * d].copy_from_slice(&embed.data()[id as usize * d..(id as usize + 1) * d]);
    }
    let mut layers = Vec::new();
    for l in 0..config.n_layers {
        let shape = config.layer_shape(l);
        let heads = shape.n_heads();
        let vt = shape.v_total();
        let (n1, inv1) = rmsnorm(&x, t_len, w.get(&names::norm1(l)).unwrap(), eps);
        let mut q = matmul(&n1, t_len, w.get(&names::wq(l)).unwrap());
        let mut k = matmul(&n1, t_len, w.get(&names::wk(l)).unwrap());
        let v = matmul(&n1, t_len, w.get(&names::wv(l)).unwrap());
        rope(&mut q, t_len, heads, hd, config.rope_base, false);
        rope(&mut k, t_len, heads, hd, config.rope_base, false);
        let scale = 1.0 / (hd as f64).sqrt();
        let mut mixed = vec![0.0; t_len * vt];
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let vd = shape.v_dims[h];
            if vd == 0 {
                probs.push(Vec::new());
                continue;
            }
            let off = shape.v_offset(h);
            let mut ph = Vec::with_capacity(t_len);
            for t in 0..t_len {
                let qt = &q[t * heads * hd + h * hd..t * heads * hd + (h + 1) * hd];
                let s: Vec<f64> = (0..=t)
                    .map(|u| {
                        let ku = &k[u * heads * hd + h * hd..u * heads * hd + (h + 1) * hd];
                        qt.iter().zip(ku).map(|(a, b)| a * b).sum::<f64>() * scale
                    })
                    .collect();
                let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
                let z: f64 = e.iter().sum();
                let p: Vec<f64> = e.iter().map(|v| v / z).collect();
                for (u, pu) in p.iter().enumerate() {
                    for j in 0..vd {
                        mixed[t * vt + off + j] += pu * v[u * vt + off + j];
                    }
                }
                ph.push(p);
            }
            probs.push(ph);
        }
        let mut x_mid = x.clone();
        if vt > 0 {
            let attn = matmul(&mixed, t_len, w.get(&names::wo(l)).unwrap());
            x_mid.iter_mut().zip(&attn).for_each(|(a, b)| *a += b);
        }
        let (n2, inv2) = rmsnorm(&x_mid, t_len, w.get(&names::norm2(l)).unwrap(), eps);
        let g = matmul(&n2, t_len, w.get(&names::gate(l)).unwrap());
        let u = matmul(&n2, t_len, w.get(&names::up(l)).unwrap());
        let a: Vec<f64> = g.iter().zip(&u).map(|(g, u)| g * sigmoid(*g) * u).collect();
        let mut x_out = x_mid.clone();
        if shape.d_ff > 0 {
            let f = matmul(&a, t_len, w.get(&names::down(l)).unwrap());
            x_out.iter_mut().zip(&f).for_each(|(a, b)| *a += b);
        }
        layers.push(LayerCache {
            x_in: x,
            n1,
            inv1,
            q,
            k,
            v,
            probs,
            mixed,
            x_mid,
            n2,
            inv2,
            g,
            u,
            a,
        });
        x = x_out;
    }
    let (nf, inv_f) = rmsnorm(&x, t_len, w.get("final_norm").unwrap(), eps);
    let logits = matmul(&nf, t_len, w.get("unembed").unwrap());
    Cache {
        ids: ids.to_vec(),
        layers,
        x_final: x,
        nf,
        inv_f,
        logits,
    }
}

/// Logits as rows, computed in f64 from weights of any precision.
pub fn reference_logits<S: Scalar>(config: &ModelConfig, weights: &WeightStore<S>, ids: &[u32]) -> Vec<Vec<f64>> {
    let w = weights.cast::<f64>();
    let cache = run(config, &w, ids);
    cache.logits.chunks(config.vocab_size).map(<[f64]>::to_vec).collect()
}

pub fn zeros_like(w: &WeightStore<f64>) -> WeightStore<f64> {
    let mut g = WeightStore::new();
    for (name, t) in w.iter() {
        g.insert(name.clone(), Tensor::zeros(t.shape()));
    }
    g
}

/// Accumulate parameter gradients for `dlogits` (`[seq, vocab]`) into `grads`.
pub fn backward(
    config: &ModelConfig,
    w: &WeightStore<f64>,
    cache: &Cache,
    dlogits: &[f64],
    grads: &mut WeightStore<f64>,
) {
    let d = config.d_model;
    let hd = config.head_dim;
    let t_len = cache.ids.len();
    let g = |n: &str| w.get(n).unwrap();

    let dnf = matmul_back(
        dlogits,
        &cache.nf,
        t_len,
        g("unembed"),
        grads.get_mut("unembed").unwrap(),
    );
    let mut dx = rmsnorm_back(
        &dnf,
        &cache.x_final,
        &cache.inv_f,
        g("final_norm"),
        grads.get_mut("final_norm").unwrap(),
    );

    for l in (0..config.n_layers).rev() {
        let c = &cache.layers[l];
        let shape = config.layer_shape(l);
        let heads = shape.n_heads();
        let vt = shape.v_total();

        // FFN sublayer.
        let mut dmid = dx.clone();
        if shape.d_ff > 0 {
            let da = matmul_back(
                &dx,
                &c.a,
                t_len,
                g(&names::down(l)),
                grads.get_mut(&names::down(l)).unwrap(),
            );
            let mut dg = vec![0.0; da.len()];
            let mut du = vec![0.0; da.len()];
            for i in 0..da.len() {
                let s = sigmoid(c.g[i]);
                du[i] = da[i] * c.g[i] * s;
                dg[i] = da[i] * c.u[i] * s * (1.0 + c.g[i] * (1.0 - s));
            }
            let mut dn2 = matmul_back(
                &dg,
                &c.n2,
                t_len,
                g(&names::gate(l)),
                grads.get_mut(&names::gate(l)).unwrap(),
            );
            let dn2u = matmul_back(
                &du,
                &c.n2,
                t_len,
                g(&names::up(l)),
                grads.get_mut(&names::up(l)).unwrap(),
            );
            dn2.iter_mut().zip(&dn2u).for_each(|(a, b)| *a += b);
            let back = rmsnorm_back(
                &dn2,
                &c.x_mid,
                &c.inv2,
                g(&names::norm2(l)),
                grads.get_mut(&names::norm2(l)).unwrap(),
            );
            dmid.iter_mut().zip(&back).for_each(|(a, b)| *a += b);
        }

        // Attention sublayer.
        let mut din = dmid.clone();
        if vt > 0 {
            let dmixed = matmul_back(
                &dmid,
                &c.mixed,
                t_len,
                g(&names::wo(l)),
                grads.get_mut(&names::wo(l)).unwrap(),
            );
            let qw = heads * hd;
            let mut dq = vec![0.0; t_len * qw];
            let mut dk = vec![0.0; t_len * qw];
            let mut dv = vec![0.0; t_len * vt];
            let scale = 1.0 / (hd as f64).sqrt();
            for h in 0..heads {
                let vd = shape.v_dims[h];
                if vd == 0 {
                    continue;
                }
                let off = shape.v_offset(h);
                for t in 0..t_len {
                    let p = &c.probs[h][t];
                    let dout = &dmixed[t * vt + off..t * vt + off + vd];
                    let dp: Vec<f64> = (0..=t)
                        .map(|u| (0..vd).map(|j| dout[j] * c.v[u * vt + off + j]).sum())
                        .collect();
                    let dot: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
                    for u in 0..=t {
                        for j in 0..vd {
                            dv[u * vt + off + j] += p[u] * dout[j];
                        }
                        let ds = p[u] * (dp[u] - dot) * scale;
                        for i in 0..hd {
                            dq[t * qw + h * hd + i] += ds * c.k[u * qw + h * hd + i];
                            dk[u * qw + h * hd + i] += ds * c.q[t * qw + h * hd + i];
                        }
                    }
                }
            }
            rope(&mut dq, t_len, heads, hd, config.rope_base, true);
            rope(&mut dk, t_len, heads, hd, config.rope_base, true);
            let mut dn1 = matmul_back(
                &dq,
                &c.n1,
                t_len,
                g(&names::wq(l)),
                grads.get_mut(&names::wq(l)).unwrap(),
            );
            for (dy, name) in [(&dk, names::wk(l)), (&dv, names::wv(l))] {
                let part = matmul_back(dy, &c.n1, t_len, g(&name), grads.get_mut(&name).unwrap());
                dn1.iter_mut().zip(&part).for_each(|(a, b)| *a += b);
            }
            let back = rmsnorm_back(
                &dn1,
                &c.x_in,
                &c.inv1,
                g(&names::norm1(l)),
                grads.get_mut(&names::norm1(l)).unwrap(),
            );
            din.iter_mut().zip(&back).for_each(|(a, b)| *a += b);
        }
        dx = din;
    }
    let de = grads.get_mut("embed").unwrap();
    for (t, &id) in cache.ids.iter().enumerate() {
        let row = &mut de.data_mut()[id as usize * d..(id as usize + 1) * d];
        row.iter_mut().zip(&dx[t * d..(t + 1) * d]).for_each(|(a, b)| *a += b);
    }
}

/// Summed next-token cross-entropy of one sequence and its logit gradient
/// scaled by `weight`.
pub fn next_token_loss(cache: &Cache, vocab: usize, weight: f64) -> (f64, Vec<f64>) {
    let t_len = cache.ids.len();
    let mut dl = vec![0.0; cache.logits.len()];
    let mut loss = 0.0;
    for t in 0..t_len.saturating_sub(1) {
        let row = &cache.logits[t * vocab..(t + 1) * vocab];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        let target = cache.ids[t + 1] as usize;
        loss += -(row[target] - m - z.ln());
        for (i, v) in row.iter().enumerate() {
            let p = (v - m).exp() / z;
            dl[t * vocab + i] = weight * (p - if i == target { 1.0 } else { 0.0 });
        }
    }
    (loss, dl)
}

/// Mean next-token loss over `batch` and its parameter gradient.
pub fn loss_and_grad(config: &ModelConfig, w: &WeightStore<f64>, batch: &[Vec<u32>]) -> (f64, WeightStore<f64>) {
    let n: usize = batch.iter().map(|s| s.len().saturating_sub(1)).sum();
    let mut grads = zeros_like(w);
    let mut total = 0.0;
    for ids in batch {
        let cache = run(config, w, ids);
        let (loss, dl) = next_token_loss(&cache, config.vocab_size, 1.0 / n as f64);
        total += loss;
        backward(config, w, &cache, &dl, &mut grads);
    }
    (total / n as f64, grads)
}

/// Mean next-token loss over `batch` without gradients.
pub fn loss(config: &ModelConfig, w: &WeightStore<f64>, batch: &[Vec<u32>]) -> f64 {
    let n: usize = batch.iter().map(|s| s.len().saturating_sub(1)).sum();
    batch
        .iter()
        .map(|ids| next_token_loss(&run(config, w, ids), config.vocab_size, 0.0).0)
        .sum::<f64>()
        / n as f64
}
