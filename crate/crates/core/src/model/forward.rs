//! Pre-LN transformer forward and reverse passes over a `[B, S]` batch.
//!
//! Rows of every activation matrix are the `N = B·S` token positions. The
//! output head is only evaluated at requested rows (loss sites), which is
//! where all of the vocabulary-sized work happens.

use rand::Rng;

use super::config::ModelConfig;
use super::params::{layer_base, slot, Params, POS_EMB, TOK_EMB};
use super::tensor::{gemm, matmul, matmul_at, matmul_bt, Scalar, View, ViewMut};
use crate::corpus::Objective;
use crate::rng::{keyed2, stream};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Forward-pass mode. Train mode applies dropout from a seeded stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { dropout_seed: u64 },
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Dims {
    pub b: usize,
    pub s: usize,
    pub d: usize,
    pub h: usize,
    pub dh: usize,
    pub f: usize,
    pub v: usize,
    pub n: usize,
}

struct LayerCache<T> {
    xhat1: Vec<T>,
    rstd1: Vec<T>,
    h1: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    probs: Vec<T>,
    attn: Vec<T>,
    drop_attn: Option<Vec<T>>,
    xhat2: Vec<T>,
    rstd2: Vec<T>,
    h2: Vec<T>,
    u: Vec<T>,
    th: Vec<T>,
    g: Vec<T>,
    drop_ffn: Option<Vec<T>>,
}

pub(crate) struct ForwardCache<T> {
    pub dims: Dims,
    ids: Vec<u32>,
    drop_emb: Option<Vec<T>>,
    layers: Vec<LayerCache<T>>,
    /// Final residual stream, `[N, d]`.
    pub hidden: Vec<T>,
}

fn dropout_mask<T: Scalar>(mode: Mode, rate: f64, site: u64, len: usize) -> Option<Vec<T>> {
    match mode {
        Mode::Train { dropout_seed } if rate > 0.0 => {
            let mut rng = keyed2(dropout_seed, stream::DROPOUT, site);
            let keep = T::from_f64(1.0 / (1.0 - rate));
            Some(
                (0..len)
                    .map(|_| {
                        if rng.random::<f64>() < rate {
                            T::zero()
                        } else {
                            keep
                        }
                    })
                    .collect(),
            )
        }
        _ => None,
    }
}

fn layer_norm<T: Scalar>(x: &[T], gain: &[T], bias: &[T], d: usize) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = x.len() / d;
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); n];
    let mut y = vec![T::zero(); x.len()];
    for r in 0..n {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().map(|v| v.as_f64()).sum::<f64>() / d as f64;
        let var = row
            .iter()
            .map(|v| {
                let c = v.as_f64() - mean;
                c * c
            })
            .sum::<f64>()
            / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = T::from_f64(rs);
        for j in 0..d {
            let xh = T::from_f64((row[j].as_f64() - mean) * rs);
            xhat[r * d + j] = xh;
            y[r * d + j] = xh * gain[j] + bias[j];
        }
    }
    (xhat, rstd, y)
}

/// Returns dx and accumulates the gain/bias gradients.
fn layer_norm_backward<T: Scalar>(
    dy: &[T],
    xhat: &[T],
    rstd: &[T],
    gain: &[T],
    dgain: &mut [T],
    dbias: &mut [T],
    d: usize,
) -> Vec<T> {
    let n = dy.len() / d;
    let mut dx = vec![T::zero(); dy.len()];
    let inv_d = T::from_f64(1.0 / d as f64);
    for r in 0..n {
        let dyr = &dy[r * d..(r + 1) * d];
        let xr = &xhat[r * d..(r + 1) * d];
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for j in 0..d {
            dgain[j] += dyr[j] * xr[j];
            dbias[j] += dyr[j];
            let g = dyr[j] * gain[j];
            sum_g += g;
            sum_gx += g * xr[j];
        }
        let mg = sum_g * inv_d;
        let mgx = sum_gx * inv_d;
        for j in 0..d {
            let g = dyr[j] * gain[j];
            dx[r * d + j] = rstd[r] * (g - mg - xr[j] * mgx);
        }
    }
    dx
}

fn add_bias<T: Scalar>(x: &mut [T], bias: &[T]) {
    let d = bias.len();
    for row in x.chunks_mut(d) {
        for (a, &b) in row.iter_mut().zip(bias) {
            *a += b;
        }
    }
}

fn col_sum_into<T: Scalar>(x: &[T], out: &mut [T]) {
    let d = out.len();
    for row in x.chunks(d) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

fn mul_mask<T: Scalar>(x: &mut [T], mask: &Option<Vec<T>>) {
    if let Some(m) = mask {
        for (a, &k) in x.iter_mut().zip(m) {
            *a *= k;
        }
    }
}

fn softmax_rows_inplace<T: Scalar>(scores: &mut [T], s: usize, causal: bool) {
    for i in 0..s {
        let row = &mut scores[i * s..(i + 1) * s];
        let end = if causal { i + 1 } else { s };
        let max = row[..end].iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = 0.0f64;
        for v in row[..end].iter_mut() {
            *v = (*v - max).exp();
            sum += v.as_f64();
        }
        let inv = T::from_f64(1.0 / sum);
        for v in row[..end].iter_mut() {
            *v *= inv;
        }
        for v in row[end..].iter_mut() {
            *v = T::zero();
        }
    }
}

/// tanh through a single exp; cheaper than libm tanh and accurate to a few ulps
/// away from zero.
fn tanh_fast<T: Scalar>(x: T) -> T {
    let two = T::from_f64(2.0);
    T::one() - two / ((two * x).exp() + T::one())
}

pub(crate) fn forward<T: Scalar>(
    params: &Params<T>,
    cfg: &ModelConfig,
    ids: &[u32],
    b: usize,
    s: usize,
    mode: Mode,
) -> ForwardCache<T> {
    let d = cfg.d_model;
    let dims = Dims {
        b,
        s,
        d,
        h: cfg.n_heads,
        dh: cfg.head_dim(),
        f: cfg.d_ffn,
        v: cfg.vocab_size,
        n: b * s,
    };
    let n = dims.n;
    let causal = cfg.objective == Objective::Clm;

    let tok = params.t(TOK_EMB);
    let pos = params.t(POS_EMB);
    let mut x = vec![T::zero(); n * d];
    for r in 0..n {
        let t = ids[r] as usize;
        let p = r % s;
        for j in 0..d {
            x[r * d + j] = tok[t * d + j] + pos[p * d + j];
        }
    }
    let drop_emb = dropout_mask::<T>(mode, cfg.dropout, 0, n * d);
    mul_mask(&mut x, &drop_emb);

    let scale = T::from_f64(1.0 / (dims.dh as f64).sqrt());
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for l in 0..cfg.n_layers {
        let base = layer_base(l);
        let w = |o: usize| params.t(base + o);

        let (xhat1, rstd1, h1) = layer_norm(&x, w(slot::LN1_G), w(slot::LN1_B), d);
        let mut q = vec![T::zero(); n * d];
        let mut k = vec![T::zero(); n * d];
        let mut v = vec![T::zero(); n * d];
        matmul(&h1, w(slot::WQ), &mut q, n, d, d, false);
        matmul(&h1, w(slot::WK), &mut k, n, d, d, false);
        matmul(&h1, w(slot::WV), &mut v, n, d, d, false);
        add_bias(&mut q, w(slot::BQ));
        add_bias(&mut k, w(slot::BK));
        add_bias(&mut v, w(slot::BV));

        let mut probs = vec![T::zero(); b * dims.h * s * s];
        let mut attn = vec![T::zero(); n * d];
        for bi in 0..b {
            for hi in 0..dims.h {
                let off = bi * s * d + hi * dims.dh;
                let pb = (bi * dims.h + hi) * s * s;
                let p = &mut probs[pb..pb + s * s];
                gemm(
                    scale,
                    View::rm(&q, off, s, dims.dh, d),
                    View::rm(&k, off, s, dims.dh, d).t(),
                    T::zero(),
                    ViewMut::rm(p, 0, s, s, s),
                );
                softmax_rows_inplace(p, s, causal);
                gemm(
                    T::one(),
                    View::rm(p, 0, s, s, s),
                    View::rm(&v, off, s, dims.dh, d),
                    T::zero(),
                    ViewMut::rm(&mut attn, off, s, dims.dh, d),
                );
            }
        }
        let mut ao = vec![T::zero(); n * d];
        matmul(&attn, w(slot::WO), &mut ao, n, d, d, false);
        add_bias(&mut ao, w(slot::BO));
        let drop_attn = dropout_mask::<T>(mode, cfg.dropout, 1 + 2 * l as u64, n * d);
        mul_mask(&mut ao, &drop_attn);
        for (a, o) in x.iter_mut().zip(&ao) {
            *a += *o;
        }

        let (xhat2, rstd2, h2) = layer_norm(&x, w(slot::LN2_G), w(slot::LN2_B), d);
        let f = dims.f;
        let mut u = vec![T::zero(); n * f];
        matmul(&h2, w(slot::W1), &mut u, n, d, f, false);
        add_bias(&mut u, w(slot::B1));
        let mut th = vec![T::zero(); n * f];
        let mut g = vec![T::zero(); n * f];
        let half = T::from_f64(0.5);
        let c = T::from_f64(GELU_C);
        let a3 = T::from_f64(GELU_A);
        for i in 0..n * f {
            let ui = u[i];
            let t = tanh_fast(c * (ui + a3 * ui * ui * ui));
            th[i] = t;
            g[i] = half * ui * (T::one() + t);
        }
        let mut fo = vec![T::zero(); n * d];
        matmul(&g, w(slot::W2), &mut fo, n, f, d, false);
        add_bias(&mut fo, w(slot::B2));
        let drop_ffn = dropout_mask::<T>(mode, cfg.dropout, 2 + 2 * l as u64, n * d);
        mul_mask(&mut fo, &drop_ffn);
        for (a, o) in x.iter_mut().zip(&fo) {
            *a += *o;
        }

        layers.push(LayerCache {
            xhat1,
            rstd1,
            h1,
            q,
            k,
            v,
            probs,
            attn,
            drop_attn,
            xhat2,
            rstd2,
            h2,
            u,
            th,
            g,
            drop_ffn,
        });
    }
    ForwardCache {
        dims,
        ids: ids.to_vec(),
        drop_emb,
        layers,
        hidden: x,
    }
}

/// Gathers the hidden rows at `rows` (flat `b*S + pos` indices).
pub(crate) fn gather_rows<T: Scalar>(hidden: &[T], rows: &[usize], d: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(rows.len() * d);
    for &r in rows {
        out.extend_from_slice(&hidden[r * d..(r + 1) * d]);
    }
    out
}

/// Logits `[R, V]` for the gathered rows via the tied embedding.
pub(crate) fn head<T: Scalar>(params: &Params<T>, selected: &[T], rows: usize, d: usize, v: usize) -> Vec<T> {
    let mut z = vec![T::zero(); rows * v];
    matmul_bt(selected, params.t(TOK_EMB), &mut z, rows, d, v, false);
    z
}

/// Reverse pass. `d_logits` is `[R, V]` for `rows`; returns parameter gradients.
pub(crate) fn backward<T: Scalar>(
    params: &Params<T>,
    cfg: &ModelConfig,
    cache: &ForwardCache<T>,
    rows: &[usize],
    selected: &[T],
    d_logits: &[T],
) -> Params<T> {
    let dims = cache.dims;
    let (n, d, s, f) = (dims.n, dims.d, dims.s, dims.f);
    let r = rows.len();
    let mut grads = params.zeros_like();

    // head: z = H_sel · Eᵀ
    matmul_at(d_logits, selected, grads.t_mut(TOK_EMB), r, dims.v, d, true);
    let mut d_sel = vec![T::zero(); r * d];
    matmul(d_logits, params.t(TOK_EMB), &mut d_sel, r, dims.v, d, false);
    let mut dx = vec![T::zero(); n * d];
    for (i, &row) in rows.iter().enumerate() {
        for j in 0..d {
            dx[row * d + j] += d_sel[i * d + j];
        }
    }

    let scale = T::from_f64(1.0 / (dims.dh as f64).sqrt());
    let causal = cfg.objective == Objective::Clm;
    for l in (0..cfg.n_layers).rev() {
        let base = layer_base(l);
        let lc = &cache.layers[l];

        // FFN sub-block
        let mut dfo = dx.clone();
        mul_mask(&mut dfo, &lc.drop_ffn);
        matmul_at(&lc.g, &dfo, grads.t_mut(base + slot::W2), n, f, d, true);
        col_sum_into(&dfo, grads.t_mut(base + slot::B2));
        let mut du = vec![T::zero(); n * f];
        matmul_bt(&dfo, params.t(base + slot::W2), &mut du, n, d, f, false);
        let half = T::from_f64(0.5);
        let c = T::from_f64(GELU_C);
        let a3 = T::from_f64(3.0 * GELU_A);
        for i in 0..n * f {
            let u = lc.u[i];
            let t = lc.th[i];
            let dg = half * (T::one() + t) + half * u * (T::one() - t * t) * c * (T::one() + a3 * u * u);
            du[i] *= dg;
        }
        matmul_at(&lc.h2, &du, grads.t_mut(base + slot::W1), n, d, f, true);
        col_sum_into(&du, grads.t_mut(base + slot::B1));
        let mut dh2 = vec![T::zero(); n * d];
        matmul_bt(&du, params.t(base + slot::W1), &mut dh2, n, f, d, false);
        let dx_ln2 = {
            let (gains, rest) = grads.tensors.split_at_mut(base + slot::LN2_B);
            layer_norm_backward(
                &dh2,
                &lc.xhat2,
                &lc.rstd2,
                params.t(base + slot::LN2_G),
                &mut gains[base + slot::LN2_G].data,
                &mut rest[0].data,
                d,
            )
        };
        for (a, b) in dx.iter_mut().zip(&dx_ln2) {
            *a += *b;
        }

        // attention sub-block
        let mut dao = dx.clone();
        mul_mask(&mut dao, &lc.drop_attn);
        matmul_at(&lc.attn, &dao, grads.t_mut(base + slot::WO), n, d, d, true);
        col_sum_into(&dao, grads.t_mut(base + slot::BO));
        let mut dattn = vec![T::zero(); n * d];
        matmul_bt(&dao, params.t(base + slot::WO), &mut dattn, n, d, d, false);

        let mut dq = vec![T::zero(); n * d];
        let mut dk = vec![T::zero(); n * d];
        let mut dv = vec![T::zero(); n * d];
        let mut dp = vec![T::zero(); s * s];
        for bi in 0..dims.b {
            for hi in 0..dims.h {
                let off = bi * s * d + hi * dims.dh;
                let pb = (bi * dims.h + hi) * s * s;
                let p = &lc.probs[pb..pb + s * s];
                // dP = dO · Vᵀ
                gemm(
                    T::one(),
                    View::rm(&dattn, off, s, dims.dh, d),
                    View::rm(&lc.v, off, s, dims.dh, d).t(),
                    T::zero(),
                    ViewMut::rm(&mut dp, 0, s, s, s),
                );
                // dV = Pᵀ · dO
                gemm(
                    T::one(),
                    View::rm(p, 0, s, s, s).t(),
                    View::rm(&dattn, off, s, dims.dh, d),
                    T::zero(),
                    ViewMut::rm(&mut dv, off, s, dims.dh, d),
                );
                // softmax backward, in place on dp
                for i in 0..s {
                    let end = if causal { i + 1 } else { s };
                    let pr = &p[i * s..(i + 1) * s];
                    let dr = &mut dp[i * s..(i + 1) * s];
                    let dot: f64 = (0..end).map(|j| (pr[j] * dr[j]).as_f64()).sum();
                    let dot = T::from_f64(dot);
                    for j in 0..end {
                        dr[j] = pr[j] * (dr[j] - dot);
                    }
                    for x in dr[end..].iter_mut() {
                        *x = T::zero();
                    }
                }
                // dQ = dS · K · scale ; dK = dSᵀ · Q · scale
                gemm(
                    scale,
                    View::rm(&dp, 0, s, s, s),
                    View::rm(&lc.k, off, s, dims.dh, d),
                    T::zero(),
                    ViewMut::rm(&mut dq, off, s, dims.dh, d),
                );
                gemm(
                    scale,
                    View::rm(&dp, 0, s, s, s).t(),
                    View::rm(&lc.q, off, s, dims.dh, d),
                    T::zero(),
                    ViewMut::rm(&mut dk, off, s, dims.dh, d),
                );
            }
        }
        let mut dh1 = vec![T::zero(); n * d];
        for (dm, w, bsl) in [
            (&dq, slot::WQ, slot::BQ),
            (&dk, slot::WK, slot::BK),
            (&dv, slot::WV, slot::BV),
        ] {
            matmul_at(&lc.h1, dm, grads.t_mut(base + w), n, d, d, true);
            col_sum_into(dm, grads.t_mut(base + bsl));
            matmul_bt(dm, params.t(base + w), &mut dh1, n, d, d, true);
        }
        let dx_ln1 = {
            let (gains, rest) = grads.tensors.split_at_mut(base + slot::LN1_B);
            layer_norm_backward(
                &dh1,
                &lc.xhat1,
                &lc.rstd1,
                params.t(base + slot::LN1_G),
                &mut gains[base + slot::LN1_G].data,
                &mut rest[0].data,
                d,
            )
        };
        for (a, b) in dx.iter_mut().zip(&dx_ln1) {
            *a += *b;
        }
    }

    mul_mask(&mut dx, &cache.drop_emb);
    {
        let (tok, rest) = grads.tensors.split_at_mut(POS_EMB);
        let dtok = &mut tok[TOK_EMB].data;
        let dpos = &mut rest[0].data;
        for rr in 0..n {
            let t = cache.ids[rr] as usize;
            let p = rr % s;
            for j in 0..d {
                let g = dx[rr * d + j];
                dtok[t * d + j] += g;
                dpos[p * d + j] += g;
            }
        }
    }
    grads
}
