use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng as _;

use super::{check_ids, ContextEmbeddings, EncoderParams, LayerParams};
use crate::tokenizer::{TokenId, PAD};
use crate::util::Rng;
use crate::{Error, Result};

const LN_EPS: f64 = 1e-12;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

struct LayerCache {
    input: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Attention probabilities per head, before dropout.
    probs: Vec<Array2<f64>>,
    probs_mask: Option<Vec<Array2<f64>>>,
    context: Array2<f64>,
    attn_mask: Option<Array2<f64>>,
    ln1: NormCache,
    h1: Array2<f64>,
    ff_pre: Array2<f64>,
    ff_act: Array2<f64>,
    ff_mask: Option<Array2<f64>>,
    ln2: NormCache,
}

/// Activations saved by [`forward`] for the reverse pass.
pub struct ForwardCache {
    ids: Vec<TokenId>,
    embed_mask: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    pub fn attention(&self) -> Vec<Vec<Array2<f64>>> {
        self.layers.iter().map(|l| l.probs.clone()).collect()
    }

    pub fn last_layer_attention(&self) -> Option<&[Array2<f64>]> {
        self.layers.last().map(|l| l.probs.as_slice())
    }
}

fn dropout_mask(rng: &mut Rng, shape: (usize, usize), rate: f64) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < rate { 0.0 } else { keep })
}

fn affine(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    x.dot(w) + b
}

fn layer_norm(z: &Array2<f64>, gamma: &Array1<f64>, beta: &Array1<f64>) -> (Array2<f64>, NormCache) {
    let d = z.ncols() as f64;
    let mut xhat = z.clone();
    let mut inv_std = Array1::zeros(z.nrows());
    for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *inv = 1.0 / (var + LN_EPS).sqrt();
        row *= *inv;
    }
    let y = &xhat * gamma + beta;
    (y, NormCache { xhat, inv_std })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &NormCache,
    gamma: &Array1<f64>,
    d_gamma: &mut Array1<f64>,
    d_beta: &mut Array1<f64>,
) -> Array2<f64> {
    *d_gamma += &(dy * &cache.xhat).sum_axis(Axis(0));
    *d_beta += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let mut dx = dy * gamma;
    for ((mut row, xhat), &inv) in dx
        .rows_mut()
        .into_iter()
        .zip(cache.xhat.rows())
        .zip(cache.inv_std.iter())
    {
        let mean_g = row.sum() / d;
        let mean_gx = row.dot(&xhat) / d;
        Zip::from(&mut row)
            .and(&xhat)
            .for_each(|g, &xh| *g = inv * (*g - mean_g - xh * mean_gx));
    }
    dx
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Row-wise softmax restricted to valid keys; invalid keys get probability 0.
fn masked_softmax(scores: &mut Array2<f64>, key_valid: &[bool]) {
    for mut row in scores.rows_mut() {
        let max = row
            .iter()
            .zip(key_valid)
            .filter(|(_, &ok)| ok)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (v, &ok) in row.iter_mut().zip(key_valid) {
            *v = if ok { (*v - max).exp() } else { 0.0 };
            sum += *v;
        }
        row /= sum;
    }
}

fn add_matmul(acc: &mut Array2<f64>, a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) {
    general_mat_mul(1.0, &a, &b, 1.0, acc);
}

fn layer_forward(
    p: &LayerParams,
    x: Array2<f64>,
    key_valid: &[bool],
    heads: usize,
    rate: f64,
    mut dropout: Option<&mut Rng>,
) -> (Array2<f64>, LayerCache) {
    let (len, d) = x.dim();
    let dk = d / heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let q = affine(&x, &p.wq, &p.bq);
    let k = affine(&x, &p.wk, &p.bk);
    let v = affine(&x, &p.wv, &p.bv);

    let mut probs = Vec::with_capacity(heads);
    let mut probs_mask = dropout.as_ref().map(|_| Vec::with_capacity(heads));
    let mut context = Array2::zeros((len, d));
    for h in 0..heads {
        let cols = s![.., h * dk..(h + 1) * dk];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t());
        scores *= scale;
        masked_softmax(&mut scores, key_valid);
        let mut ctx = context.slice_mut(cols);
        match (dropout.as_deref_mut(), probs_mask.as_mut()) {
            (Some(r), Some(masks)) => {
                let mask = dropout_mask(r, (len, len), rate);
                general_mat_mul(1.0, &(&scores * &mask), &v.slice(cols), 0.0, &mut ctx);
                masks.push(mask);
            }
            _ => general_mat_mul(1.0, &scores, &v.slice(cols), 0.0, &mut ctx),
        }
        probs.push(scores);
    }

    let mut attn = affine(&context, &p.wo, &p.bo);
    let attn_mask = dropout.as_deref_mut().map(|r| dropout_mask(r, (len, d), rate));
    if let Some(m) = &attn_mask {
        attn *= m;
    }
    attn += &x;
    let (h1, ln1) = layer_norm(&attn, &p.ln1_gamma, &p.ln1_beta);

    let ff_pre = affine(&h1, &p.w1, &p.b1);
    let ff_act = ff_pre.mapv(gelu);
    let mut ff = affine(&ff_act, &p.w2, &p.b2);
    let ff_mask = dropout.map(|r| dropout_mask(r, (len, d), rate));
    if let Some(m) = &ff_mask {
        ff *= m;
    }
    ff += &h1;
    let (out, ln2) = layer_norm(&ff, &p.ln2_gamma, &p.ln2_beta);

    let cache = LayerCache {
        input: x,
        q,
        k,
        v,
        probs,
        probs_mask,
        context,
        attn_mask,
        ln1,
        h1,
        ff_pre,
        ff_act,
        ff_mask,
        ln2,
    };
    (out, cache)
}

/// Encodes `ids`. Dropout is applied only when an RNG is supplied.
pub fn forward(
    params: &EncoderParams,
    ids: &[TokenId],
    mut dropout: Option<&mut Rng>,
) -> Result<(ContextEmbeddings, ForwardCache)> {
    check_ids(params, ids)?;
    let c = &params.config;
    let rate = c.dropout_rate;
    if rate == 0.0 {
        dropout = None;
    }
    let len = ids.len();
    let mut key_valid: Vec<bool> = ids.iter().map(|&id| id != PAD).collect();
    if !key_valid.iter().any(|&v| v) {
        key_valid.iter_mut().for_each(|v| *v = true);
    }

    let mut x = Array2::zeros((len, c.d_model));
    for (i, (mut row, &id)) in x.rows_mut().into_iter().zip(ids).enumerate() {
        row.assign(&params.token_embeddings.row(id as usize));
        row += &params.position_embeddings.row(i);
    }
    let embed_mask = dropout
        .as_deref_mut()
        .map(|r| dropout_mask(r, (len, c.d_model), rate));
    if let Some(m) = &embed_mask {
        x *= m;
    }

    let mut layers = Vec::with_capacity(params.layers.len());
    for (l, p) in params.layers.iter().enumerate() {
        let (out, cache) = layer_forward(p, x, &key_valid, c.num_heads, rate, dropout.as_deref_mut());
        if !out.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("encoder layer {l}"),
            });
        }
        layers.push(cache);
        x = out;
    }
    Ok((
        ContextEmbeddings(x),
        ForwardCache {
            ids: ids.to_vec(),
            embed_mask,
            layers,
        },
    ))
}

fn layer_backward(
    p: &LayerParams,
    cache: &LayerCache,
    d_out: Array2<f64>,
    heads: usize,
    g: &mut LayerParams,
) -> Array2<f64> {
    let d = d_out.ncols();
    let dk = d / heads;
    let scale = 1.0 / (dk as f64).sqrt();

    // Feed-forward sub-block.
    let dz2 = layer_norm_backward(&d_out, &cache.ln2, &p.ln2_gamma, &mut g.ln2_gamma, &mut g.ln2_beta);
    let mut dh1 = dz2.clone();
    let mut dff = dz2;
    if let Some(m) = &cache.ff_mask {
        dff *= m;
    }
    add_matmul(&mut g.w2, cache.ff_act.t(), dff.view());
    g.b2 += &dff.sum_axis(Axis(0));
    let mut du = dff.dot(&p.w2.t());
    Zip::from(&mut du)
        .and(&cache.ff_pre)
        .for_each(|g, &u| *g *= gelu_grad(u));
    add_matmul(&mut g.w1, cache.h1.t(), du.view());
    g.b1 += &du.sum_axis(Axis(0));
    add_matmul(&mut dh1, du.view(), p.w1.t());

    // Attention sub-block.
    let dz1 = layer_norm_backward(&dh1, &cache.ln1, &p.ln1_gamma, &mut g.ln1_gamma, &mut g.ln1_beta);
    let mut dx = dz1.clone();
    let mut da = dz1;
    if let Some(m) = &cache.attn_mask {
        da *= m;
    }
    add_matmul(&mut g.wo, cache.context.t(), da.view());
    g.bo += &da.sum_axis(Axis(0));
    let dctx = da.dot(&p.wo.t());

    let mut dq = Array2::zeros(cache.q.raw_dim());
    let mut dkm = Array2::zeros(cache.k.raw_dim());
    let mut dv = Array2::zeros(cache.v.raw_dim());
    for h in 0..heads {
        let cols = s![.., h * dk..(h + 1) * dk];
        let probs = &cache.probs[h];
        let dctx_h = dctx.slice(cols);
        let (dropped, mask) = match &cache.probs_mask {
            Some(masks) => (probs * &masks[h], Some(&masks[h])),
            None => (probs.clone(), None),
        };
        general_mat_mul(1.0, &dropped.t(), &dctx_h, 0.0, &mut dv.slice_mut(cols));
        let mut dp = dctx_h.dot(&cache.v.slice(cols).t());
        if let Some(m) = mask {
            dp *= m;
        }
        // Softmax reverse: dS = P * (dP - rowsum(dP * P)).
        for (mut drow, prow) in dp.rows_mut().into_iter().zip(probs.rows()) {
            let inner = drow.dot(&prow);
            Zip::from(&mut drow)
                .and(&prow)
                .for_each(|g, &pr| *g = pr * (*g - inner));
        }
        dp *= scale;
        general_mat_mul(1.0, &dp, &cache.k.slice(cols), 0.0, &mut dq.slice_mut(cols));
        general_mat_mul(1.0, &dp.t(), &cache.q.slice(cols), 0.0, &mut dkm.slice_mut(cols));
    }

    let x = &cache.input;
    for (dproj, w, gw, gb) in [
        (&dq, &p.wq, &mut g.wq, &mut g.bq),
        (&dkm, &p.wk, &mut g.wk, &mut g.bk),
        (&dv, &p.wv, &mut g.wv, &mut g.bv),
    ] {
        add_matmul(gw, x.t(), dproj.view());
        *gb += &dproj.sum_axis(Axis(0));
        add_matmul(&mut dx, dproj.view(), w.t());
    }
    dx
}

/// Accumulates into `grads` the gradient of a scalar whose derivative with respect
/// to the encoder outputs is `d_out`.
pub fn backward(params: &EncoderParams, cache: &ForwardCache, d_out: Array2<f64>, grads: &mut EncoderParams) {
    let heads = params.config.num_heads;
    let mut d = d_out;
    for (l, layer_cache) in cache.layers.iter().enumerate().rev() {
        d = layer_backward(&params.layers[l], layer_cache, d, heads, &mut grads.layers[l]);
    }
    if let Some(m) = &cache.embed_mask {
        d *= m;
    }
    for (i, (row, &id)) in d.rows().into_iter().zip(&cache.ids).enumerate() {
        let mut tok = grads.token_embeddings.row_mut(id as usize);
        tok += &row;
        let mut pos = grads.position_embeddings.row_mut(i);
        pos += &row;
    }
}
