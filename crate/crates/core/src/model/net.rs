//! Forward and backward passes of the decoder over one token sequence.
//!
//! Pre-norm blocks: `x += Attn(LN1 x)`, `x += MLP(LN2 x)`, then a final norm
//! and the output projection. Rotary phases act on query/key pairs
//! `(2i, 2i+1)` of every head. Linear maps are bias-free, stored `[out x in]`.

use super::config::{Activation, MlpKind, ModelConfig, TensorSpec};
use super::scalar::{mm, Mat, MatMut, Scalar};
use crate::corpus::vocab::PAD;
use crate::error::{Error, Result};

pub(crate) const LN_EPS: f64 = 1e-5;
const ROPE_BASE: f64 = 10_000.0;

#[derive(Clone, Debug)]
struct MlpIdx {
    ln2g: usize,
    ln2b: usize,
    w1: usize,
    w2: Option<usize>,
    wout: usize,
}

#[derive(Clone, Debug)]
struct LayerIdx {
    ln1g: usize,
    ln1b: usize,
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    mlp: Option<MlpIdx>,
}

/// Offsets of every tensor in the flat parameter buffer.
#[derive(Clone, Debug)]
pub(crate) struct Index {
    embed: usize,
    layers: Vec<LayerIdx>,
    lnfg: usize,
    lnfb: usize,
    /// Equal to `embed` when weights are tied.
    unembed: usize,
}

impl Index {
    pub(crate) fn new(cfg: &ModelConfig, tensors: &[TensorSpec]) -> Index {
        let at = |name: &str| tensors.iter().find(|t| t.name == name).map(|t| t.offset);
        let get = |name: String| at(&name).unwrap_or_else(|| panic!("missing tensor {name}"));
        let layers = (0..cfg.layers)
            .map(|l| LayerIdx {
                ln1g: get(format!("l{l}.ln1.g")),
                ln1b: get(format!("l{l}.ln1.b")),
                wq: get(format!("l{l}.wq")),
                wk: get(format!("l{l}.wk")),
                wv: get(format!("l{l}.wv")),
                wo: get(format!("l{l}.wo")),
                mlp: (cfg.mlp != MlpKind::None).then(|| MlpIdx {
                    ln2g: get(format!("l{l}.ln2.g")),
                    ln2b: get(format!("l{l}.ln2.b")),
                    w1: get(format!("l{l}.w1")),
                    w2: at(&format!("l{l}.w2")),
                    wout: get(format!("l{l}.wout")),
                }),
            })
            .collect();
        let embed = get("embed".into());
        Index {
            embed,
            layers,
            lnfg: get("lnf.g".into()),
            lnfb: get("lnf.b".into()),
            unembed: at("unembed").unwrap_or(embed),
        }
    }
}

struct MlpCache<T> {
    hat: Vec<T>,
    rstd: Vec<T>,
    h: Vec<T>,
    a: Vec<T>,
    /// Linear gate branch; empty unless gated.
    b: Vec<T>,
    u: Vec<T>,
}

struct LayerCache<T> {
    hat: Vec<T>,
    rstd: Vec<T>,
    h: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// Attention probabilities, `heads x t x t`.
    p: Vec<T>,
    o: Vec<T>,
    mlp: Option<MlpCache<T>>,
}

/// Activations kept for the backward pass.
pub(crate) struct Cache<T> {
    layers: Vec<LayerCache<T>>,
    hat: Vec<T>,
    rstd: Vec<T>,
    hf: Vec<T>,
}

#[cfg(test)]
impl<T: Scalar> Cache<T> {
    /// Attention probabilities of `layer`, `heads x t x t` row-major.
    pub(crate) fn attention(&self, layer: usize) -> &[T] {
        &self.layers[layer].p
    }
}

/// Borrowed view of a parameter buffer under a configuration.
pub(crate) struct Net<'a, T> {
    pub cfg: &'a ModelConfig,
    pub idx: &'a Index,
    pub p: &'a [T],
}

fn layer_norm<T: Scalar>(x: &[T], t: usize, d: usize, g: &[T], b: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut hat = vec![T::zero(); t * d];
    let mut y = vec![T::zero(); t * d];
    let mut rstd = vec![T::zero(); t];
    let inv_d = T::c(1.0 / d as f64);
    let eps = T::c(LN_EPS);
    for i in 0..t {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let r = (var + eps).sqrt().recip();
        rstd[i] = r;
        for j in 0..d {
            let h = (row[j] - mean) * r;
            hat[i * d + j] = h;
            y[i * d + j] = g[j] * h + b[j];
        }
    }
    (y, hat, rstd)
}

/// Accumulates gain/bias gradients and adds the input gradient to `dx`.
#[allow(clippy::too_many_arguments)]
fn layer_norm_back<T: Scalar>(
    dy: &[T],
    hat: &[T],
    rstd: &[T],
    t: usize,
    d: usize,
    g: &[T],
    dg: &mut [T],
    db: &mut [T],
    dx: &mut [T],
) {
    let inv_d = T::c(1.0 / d as f64);
    let mut dhat = vec![T::zero(); d];
    for i in 0..t {
        let (dyr, hr) = (&dy[i * d..(i + 1) * d], &hat[i * d..(i + 1) * d]);
        let (mut s1, mut s2) = (T::zero(), T::zero());
        for j in 0..d {
            dg[j] = dg[j] + dyr[j] * hr[j];
            db[j] = db[j] + dyr[j];
            dhat[j] = dyr[j] * g[j];
            s1 = s1 + dhat[j];
            s2 = s2 + dhat[j] * hr[j];
        }
        let (m1, m2) = (s1 * inv_d, s2 * inv_d);
        for j in 0..d {
            dx[i * d + j] = dx[i * d + j] + rstd[i] * (dhat[j] - m1 - hr[j] * m2);
        }
    }
}

fn act<T: Scalar>(kind: Activation, x: T) -> T {
    match kind {
        Activation::Gelu => {
            let c = T::c((2.0 / std::f64::consts::PI).sqrt());
            let half = T::c(0.5);
            half * x * (T::one() + (c * (x + T::c(0.044715) * x * x * x)).tanh())
        }
        Activation::Silu => x / (T::one() + (-x).exp()),
    }
}

fn act_grad<T: Scalar>(kind: Activation, x: T) -> T {
    match kind {
        Activation::Gelu => {
            let c = T::c((2.0 / std::f64::consts::PI).sqrt());
            let (half, k) = (T::c(0.5), T::c(0.044715));
            let th = (c * (x + k * x * x * x)).tanh();
            half * (T::one() + th) + half * x * (T::one() - th * th) * c * (T::one() + T::c(3.0) * k * x * x)
        }
        Activation::Silu => {
            let s = (T::one() + (-x).exp()).recip();
            s * (T::one() + x * (T::one() - s))
        }
    }
}

/// Rotary cos/sin table, `t x head_dim/2`.
fn rope_table<T: Scalar>(t: usize, hd: usize) -> (Vec<T>, Vec<T>) {
    let half = hd / 2;
    let mut cos = Vec::with_capacity(t * half);
    let mut sin = Vec::with_capacity(t * half);
    for pos in 0..t {
        for i in 0..half {
            let theta = pos as f64 * ROPE_BASE.powf(-2.0 * i as f64 / hd as f64);
            cos.push(T::c(theta.cos()));
            sin.push(T::c(theta.sin()));
        }
    }
    (cos, sin)
}

/// Rotates every head of `x` (`t x d`) by `+theta`, or `-theta` when `inverse`
/// (the transpose, used to pull gradients back).
fn rope<T: Scalar>(x: &mut [T], t: usize, d: usize, hd: usize, table: &(Vec<T>, Vec<T>), inverse: bool) {
    let half = hd / 2;
    for pos in 0..t {
        for h in 0..d / hd {
            let base = pos * d + h * hd;
            for i in 0..half {
                let (c, mut s) = (table.0[pos * half + i], table.1[pos * half + i]);
                if inverse {
                    s = -s;
                }
                let (a, b) = (x[base + 2 * i], x[base + 2 * i + 1]);
                x[base + 2 * i] = a * c - b * s;
                x[base + 2 * i + 1] = a * s + b * c;
            }
        }
    }
}

impl<'a, T: Scalar> Net<'a, T> {
    fn vec(&self, off: usize, n: usize) -> &'a [T] {
        &self.p[off..off + n]
    }

    fn mat(&self, off: usize, rows: usize, cols: usize) -> Mat<'a, T> {
        Mat::rm(&self.p[off..off + rows * cols], rows, cols)
    }

    /// `x W^T` for `W` stored `[out x in]` at `off`.
    fn proj(&self, x: &[T], t: usize, inp: usize, off: usize, out: usize) -> Vec<T> {
        let mut y = vec![T::zero(); t * out];
        mm(MatMut::rm(&mut y, t, out), Mat::rm(x, t, inp), self.mat(off, out, inp).t(), T::zero());
        y
    }

    /// Runs the network; returns the cache and the `t x vocab` logits.
    pub(crate) fn forward(&self, tokens: &[u32]) -> Result<(Cache<T>, Vec<T>)> {
        let cfg = self.cfg;
        let (t, d, hd, nh, vsz) = (tokens.len(), cfg.d(), cfg.head_dim, cfg.heads, cfg.vocab_size);
        if t > cfg.window_len {
            return Err(Error::ShapeMismatch(format!("sequence of {t} tokens exceeds window {}", cfg.window_len)));
        }
        if let Some(&bad) = tokens.iter().find(|&&tok| tok as usize >= vsz) {
            return Err(Error::ShapeMismatch(format!("token id {bad} outside vocabulary of {vsz}")));
        }
        let mut x = vec![T::zero(); t * d];
        for (i, &tok) in tokens.iter().enumerate() {
            x[i * d..(i + 1) * d].copy_from_slice(self.vec(self.idx.embed + tok as usize * d, d));
        }
        let table = rope_table::<T>(t, hd);
        let scale = T::c(1.0 / (hd as f64).sqrt());
        let mut layers = Vec::with_capacity(cfg.layers);
        for li in &self.idx.layers {
            let (h, hat, rstd) = layer_norm(&x, t, d, self.vec(li.ln1g, d), self.vec(li.ln1b, d));
            let mut q = self.proj(&h, t, d, li.wq, d);
            let mut k = self.proj(&h, t, d, li.wk, d);
            let v = self.proj(&h, t, d, li.wv, d);
            rope(&mut q, t, d, hd, &table, false);
            rope(&mut k, t, d, hd, &table, false);
            let mut p = vec![T::zero(); nh * t * t];
            let mut o = vec![T::zero(); t * d];
            for head in 0..nh {
                let s = &mut p[head * t * t..(head + 1) * t * t];
                let qh = Mat::new(&q[head * hd..], t, hd, d, 1);
                let kh = Mat::new(&k[head * hd..], t, hd, d, 1);
                mm(MatMut::rm(s, t, t), qh, kh.t(), T::zero());
                for i in 0..t {
                    let row = &mut s[i * t..(i + 1) * t];
                    let m = row[..=i].iter().fold(T::neg_infinity(), |m, &z| m.max(z * scale));
                    let mut sum = T::zero();
                    for z in &mut row[..=i] {
                        *z = (*z * scale - m).exp();
                        sum = sum + *z;
                    }
                    for z in &mut row[..=i] {
                        *z = *z / sum;
                    }
                    row[i + 1..].fill(T::zero());
                }
                let vh = Mat::new(&v[head * hd..], t, hd, d, 1);
                mm(MatMut::new(&mut o[head * hd..], t, hd, d, 1), Mat::rm(s, t, t), vh, T::zero());
            }
            let attn = self.proj(&o, t, d, li.wo, d);
            x.iter_mut().zip(&attn).for_each(|(a, &b)| *a = *a + b);
            let mlp = li.mlp.as_ref().map(|mi| {
                let g = cfg.hidden();
                let (h2, hat2, rstd2) = layer_norm(&x, t, d, self.vec(mi.ln2g, d), self.vec(mi.ln2b, d));
                let a = self.proj(&h2, t, d, mi.w1, g);
                let b = mi.w2.map(|w2| self.proj(&h2, t, d, w2, g)).unwrap_or_default();
                let u: Vec<T> = if b.is_empty() {
                    a.iter().map(|&z| act(cfg.activation, z)).collect()
                } else {
                    a.iter().zip(&b).map(|(&z, &y)| act(cfg.activation, z) * y).collect()
                };
                let out = self.proj(&u, t, g, mi.wout, d);
                x.iter_mut().zip(&out).for_each(|(a, &b)| *a = *a + b);
                MlpCache { hat: hat2, rstd: rstd2, h: h2, a, b, u }
            });
            layers.push(LayerCache { hat, rstd, h, q, k, v, p, o, mlp });
        }
        let (hf, hat, rstd) = layer_norm(&x, t, d, self.vec(self.idx.lnfg, d), self.vec(self.idx.lnfb, d));
        let logits = self.proj(&hf, t, d, self.idx.unembed, vsz);
        Ok((Cache { layers, hat, rstd, hf }, logits))
    }

    /// Accumulates parameter gradients into `grad` given `dlogits`.
    pub(crate) fn backward(&self, tokens: &[u32], cache: &Cache<T>, dlogits: &[T], grad: &mut [T]) {
        let cfg = self.cfg;
        let (t, d, hd, nh, vsz) = (tokens.len(), cfg.d(), cfg.head_dim, cfg.heads, cfg.vocab_size);
        let table = rope_table::<T>(t, hd);
        let scale = T::c(1.0 / (hd as f64).sqrt());

        // dW += dy^T x for W at `off` with shape [out x inp]
        let wgrad = |grad: &mut [T], off: usize, dy: &[T], out: usize, x: &[T], inp: usize| {
            mm(
                MatMut::rm(&mut grad[off..off + out * inp], out, inp),
                Mat::rm(dy, t, out).t(),
                Mat::rm(x, t, inp),
                T::one(),
            );
        };
        // dx (+)= dy W
        let xgrad = |dx: &mut [T], dy: &[T], off: usize, out: usize, inp: usize, beta: T| {
            mm(MatMut::rm(dx, t, inp), Mat::rm(dy, t, out), self.mat(off, out, inp), beta);
        };

        let mut dhf = vec![T::zero(); t * d];
        xgrad(&mut dhf, dlogits, self.idx.unembed, vsz, d, T::zero());
        wgrad(grad, self.idx.unembed, dlogits, vsz, &cache.hf, d);
        let mut dx = vec![T::zero(); t * d];
        {
            let (gs, rest) = grad.split_at_mut(self.idx.lnfb);
            layer_norm_back(
                &dhf,
                &cache.hat,
                &cache.rstd,
                t,
                d,
                self.vec(self.idx.lnfg, d),
                &mut gs[self.idx.lnfg..],
                &mut rest[..d],
                &mut dx,
            );
        }

        for (li, lc) in self.idx.layers.iter().zip(&cache.layers).rev() {
            if let (Some(mi), Some(mc)) = (&li.mlp, &lc.mlp) {
                let g = cfg.hidden();
                wgrad(grad, mi.wout, &dx, d, &mc.u, g);
                let mut du = vec![T::zero(); t * g];
                xgrad(&mut du, &dx, mi.wout, d, g, T::zero());
                let mut dh2 = vec![T::zero(); t * d];
                if let Some(w2) = mi.w2 {
                    let da: Vec<T> = (0..t * g).map(|i| du[i] * mc.b[i] * act_grad(cfg.activation, mc.a[i])).collect();
                    let db: Vec<T> = (0..t * g).map(|i| du[i] * act(cfg.activation, mc.a[i])).collect();
                    wgrad(grad, mi.w1, &da, g, &mc.h, d);
                    wgrad(grad, w2, &db, g, &mc.h, d);
                    xgrad(&mut dh2, &da, mi.w1, g, d, T::zero());
                    xgrad(&mut dh2, &db, w2, g, d, T::one());
                } else {
                    let da: Vec<T> = (0..t * g).map(|i| du[i] * act_grad(cfg.activation, mc.a[i])).collect();
                    wgrad(grad, mi.w1, &da, g, &mc.h, d);
                    xgrad(&mut dh2, &da, mi.w1, g, d, T::zero());
                }
                let (gs, rest) = grad.split_at_mut(mi.ln2b);
                layer_norm_back(
                    &dh2,
                    &mc.hat,
                    &mc.rstd,
                    t,
                    d,
                    self.vec(mi.ln2g, d),
                    &mut gs[mi.ln2g..],
                    &mut rest[..d],
                    &mut dx,
                );
            }

            wgrad(grad, li.wo, &dx, d, &lc.o, d);
            let mut dout = vec![T::zero(); t * d];
            xgrad(&mut dout, &dx, li.wo, d, d, T::zero());
            let mut dq = vec![T::zero(); t * d];
            let mut dk = vec![T::zero(); t * d];
            let mut dv = vec![T::zero(); t * d];
            let mut ds = vec![T::zero(); t * t];
            for head in 0..nh {
                let p = &lc.p[head * t * t..(head + 1) * t * t];
                let doh = Mat::new(&dout[head * hd..], t, hd, d, 1);
                mm(MatMut::rm(&mut ds, t, t), doh, Mat::new(&lc.v[head * hd..], t, hd, d, 1).t(), T::zero());
                mm(MatMut::new(&mut dv[head * hd..], t, hd, d, 1), Mat::rm(p, t, t).t(), doh, T::zero());
                for i in 0..t {
                    let (pr, dr) = (&p[i * t..=i * t + i], &mut ds[i * t..(i + 1) * t]);
                    let dot = pr.iter().zip(dr.iter()).fold(T::zero(), |s, (&a, &b)| s + a * b);
                    for j in 0..=i {
                        dr[j] = pr[j] * (dr[j] - dot) * scale;
                    }
                    dr[i + 1..].fill(T::zero());
                }
                mm(
                    MatMut::new(&mut dq[head * hd..], t, hd, d, 1),
                    Mat::rm(&ds, t, t),
                    Mat::new(&lc.k[head * hd..], t, hd, d, 1),
                    T::zero(),
                );
                mm(
                    MatMut::new(&mut dk[head * hd..], t, hd, d, 1),
                    Mat::rm(&ds, t, t).t(),
                    Mat::new(&lc.q[head * hd..], t, hd, d, 1),
                    T::zero(),
                );
            }
            rope(&mut dq, t, d, hd, &table, true);
            rope(&mut dk, t, d, hd, &table, true);
            wgrad(grad, li.wq, &dq, d, &lc.h, d);
            wgrad(grad, li.wk, &dk, d, &lc.h, d);
            wgrad(grad, li.wv, &dv, d, &lc.h, d);
            let mut dh = vec![T::zero(); t * d];
            xgrad(&mut dh, &dq, li.wq, d, d, T::zero());
            xgrad(&mut dh, &dk, li.wk, d, d, T::one());
            xgrad(&mut dh, &dv, li.wv, d, d, T::one());
            let (gs, rest) = grad.split_at_mut(li.ln1b);
            layer_norm_back(
                &dh,
                &lc.hat,
                &lc.rstd,
                t,
                d,
                self.vec(li.ln1g, d),
                &mut gs[li.ln1g..],
                &mut rest[..d],
                &mut dx,
            );
        }

        for (i, &tok) in tokens.iter().enumerate() {
            let row = self.idx.embed + tok as usize * d;
            for j in 0..d {
                grad[row + j] = grad[row + j] + dx[i * d + j];
            }
        }
    }
}

/// Whether position `i` (predicting `tokens[i]` from `tokens[..i]`) counts.
pub(crate) fn is_target(tokens: &[u32], mask: Option<&[bool]>, i: usize) -> bool {
    i > 0 && tokens[i] != PAD && mask.is_none_or(|m| m[i])
}

/// Per-token NLL (entry `i` scores `tokens[i]`; entry 0 and masked entries
/// are 0). When `dscale` is given, `logits` is overwritten with
/// `dscale * d(sum NLL)/d logits`.
pub(crate) fn token_nll<T: Scalar>(
    tokens: &[u32],
    mask: Option<&[bool]>,
    logits: &mut [T],
    vsz: usize,
    dscale: Option<T>,
) -> Vec<f64> {
    let t = tokens.len();
    let mut nll = vec![0.0; t];
    for row in 0..t {
        let z = &mut logits[row * vsz..(row + 1) * vsz];
        let target = row + 1 < t && is_target(tokens, mask, row + 1);
        if !target {
            if dscale.is_some() {
                z.fill(T::zero());
            }
            continue;
        }
        let m = z.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let sum = z.iter().fold(T::zero(), |s, &v| s + (v - m).exp());
        let lse = m + sum.ln();
        let tok = tokens[row + 1] as usize;
        nll[row + 1] = (lse - z[tok]).f();
        if let Some(sc) = dscale {
            for v in z.iter_mut() {
                *v = (*v - lse).exp() * sc;
            }
            z[tok] = z[tok] - sc;
        }
    }
    nll
}
