//! Transformer encoder over a flat parameter vector, with an exact
//! hand-written backward pass.
//!
//! All learned state lives in one `Vec<f64>` described by a [`Layout`];
//! gradients use the same layout. The forward pass keeps the activations
//! the backward pass needs in [`Activations`].

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormPlacement {
    /// LayerNorm before each sub-block, plus a final LayerNorm.
    Pre,
    /// LayerNorm after each residual sum (BERT).
    Post,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub vocab_size: usize,
    pub max_positions: usize,
    pub type_vocab_size: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn: usize,
    pub layers: usize,
    pub norm: NormPlacement,
    pub layer_norm_eps: f64,
    /// Dense + tanh over the classifier token before the head.
    pub pooler: bool,
}

impl TransformerConfig {
    /// Small from-scratch encoder: 2 layers, width 64, 4 heads.
    pub fn compact(vocab_size: usize, max_positions: usize) -> Self {
        Self {
            vocab_size,
            max_positions,
            type_vocab_size: 2,
            hidden: 64,
            heads: 4,
            ffn: 128,
            layers: 2,
            norm: NormPlacement::Pre,
            layer_norm_eps: 1e-5,
            pooler: false,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return Err(format!("hidden {} not divisible into {} heads", self.hidden, self.heads));
        }
        if self.vocab_size == 0 || self.max_positions == 0 || self.type_vocab_size == 0 || self.ffn == 0 {
            return Err("vocabulary, positions, types and ffn width must be non-zero".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
    /// Whether decoupled weight decay applies.
    pub decay: bool,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    q_w: usize,
    q_b: usize,
    k_w: usize,
    k_b: usize,
    v_w: usize,
    v_b: usize,
    o_w: usize,
    o_b: usize,
    ln1_g: usize,
    ln1_b: usize,
    ffn_w1: usize,
    ffn_b1: usize,
    ffn_w2: usize,
    ffn_b2: usize,
    ln2_g: usize,
    ln2_b: usize,
}

/// Where each tensor lives in the flat parameter vector.
#[derive(Debug, Clone)]
pub struct Layout {
    tensors: Vec<TensorSpec>,
    total: usize,
    word: usize,
    pos: usize,
    typ: usize,
    emb_g: usize,
    emb_b: usize,
    layers: Vec<LayerOffsets>,
    final_ln: Option<(usize, usize)>,
    pooler: Option<(usize, usize)>,
    head_w: usize,
    head_b: usize,
}

impl Layout {
    pub fn new(cfg: &TransformerConfig) -> Self {
        let mut tensors = Vec::new();
        let mut total = 0usize;
        let mut push = |name: String, shape: Vec<usize>, decay: bool| -> usize {
            let offset = total;
            total += shape.iter().product::<usize>();
            tensors.push(TensorSpec { name, offset, shape, decay });
            offset
        };
        let (d, f) = (cfg.hidden, cfg.ffn);
        let word = push("embeddings.word".into(), vec![cfg.vocab_size, d], true);
        let pos = push("embeddings.position".into(), vec![cfg.max_positions, d], true);
        let typ = push("embeddings.token_type".into(), vec![cfg.type_vocab_size, d], true);
        let emb_g = push("embeddings.norm.gain".into(), vec![d], false);
        let emb_b = push("embeddings.norm.bias".into(), vec![d], false);
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let p = |n: &str| format!("layer{l}.{n}");
            layers.push(LayerOffsets {
                q_w: push(p("attn.query.weight"), vec![d, d], true),
                q_b: push(p("attn.query.bias"), vec![d], false),
                k_w: push(p("attn.key.weight"), vec![d, d], true),
                k_b: push(p("attn.key.bias"), vec![d], false),
                v_w: push(p("attn.value.weight"), vec![d, d], true),
                v_b: push(p("attn.value.bias"), vec![d], false),
                o_w: push(p("attn.output.weight"), vec![d, d], true),
                o_b: push(p("attn.output.bias"), vec![d], false),
                ln1_g: push(p("norm1.gain"), vec![d], false),
                ln1_b: push(p("norm1.bias"), vec![d], false),
                ffn_w1: push(p("ffn.in.weight"), vec![d, f], true),
                ffn_b1: push(p("ffn.in.bias"), vec![f], false),
                ffn_w2: push(p("ffn.out.weight"), vec![f, d], true),
                ffn_b2: push(p("ffn.out.bias"), vec![d], false),
                ln2_g: push(p("norm2.gain"), vec![d], false),
                ln2_b: push(p("norm2.bias"), vec![d], false),
            });
        }
        let final_ln = (cfg.norm == NormPlacement::Pre).then(|| {
            (
                push("final_norm.gain".into(), vec![d], false),
                push("final_norm.bias".into(), vec![d], false),
            )
        });
        let pooler = cfg.pooler.then(|| {
            (
                push("pooler.weight".into(), vec![d, d], true),
                push("pooler.bias".into(), vec![d], false),
            )
        });
        let head_w = push("head.weight".into(), vec![d], true);
        let head_b = push("head.bias".into(), vec![1], false);
        Self {
            tensors,
            total,
            word,
            pos,
            typ,
            emb_g,
            emb_b,
            layers,
            final_ln,
            pooler,
            head_w,
            head_b,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn head_range(&self) -> std::ops::Range<usize> {
        self.head_w..self.head_b + 1
    }
}

/// How the scalar head starts out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeadInit {
    /// Weights and bias zero: every pair scores exactly 0.
    Zero,
    /// Zero bias, weights uniform in `[-a, a]`.
    SmallUniform(f64),
}

/// Fresh parameters: Xavier-uniform projections, uniform embeddings,
/// unit gains, zero biases.
pub fn init_params(cfg: &TransformerConfig, layout: &Layout, head: HeadInit, rng: &mut impl Rng) -> Vec<f64> {
    let mut p = vec![0.0; layout.total()];
    for t in layout.tensors() {
        let r = t.range();
        let name = t.name.as_str();
        if name.ends_with(".gain") {
            p[r].fill(1.0);
        } else if name.starts_with("embeddings.") {
            for v in &mut p[r] {
                *v = rng.random_range(-0.5..0.5);
            }
        } else if name.starts_with("head.") {
            if let (HeadInit::SmallUniform(a), "head.weight") = (head, name) {
                for v in &mut p[r] {
                    *v = rng.random_range(-a..=a);
                }
            }
        } else if t.shape.len() == 2 {
            let bound = (6.0 / (t.shape[0] + t.shape[1]) as f64).sqrt();
            for v in &mut p[r] {
                *v = rng.random_range(-bound..bound);
            }
        }
    }
    debug_assert_eq!(cfg.hidden, layout.tensor("head.weight").map_or(0, TensorSpec::len));
    p
}

fn mat(p: &[f64], off: usize, r: usize, c: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((r, c), &p[off..off + r * c]).expect("layout shape")
}

fn vect(p: &[f64], off: usize, n: usize) -> ArrayView1<'_, f64> {
    ArrayView1::from_shape(n, &p[off..off + n]).expect("layout shape")
}

fn mat_mut(g: &mut [f64], off: usize, r: usize, c: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((r, c), &mut g[off..off + r * c]).expect("layout shape")
}

fn vect_mut(g: &mut [f64], off: usize, n: usize) -> ArrayViewMut1<'_, f64> {
    ArrayViewMut1::from_shape(n, &mut g[off..off + n]).expect("layout shape")
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

#[derive(Debug, Clone)]
struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, gain: ArrayView1<f64>, bias: ArrayView1<f64>, eps: f64) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in xhat.outer_iter_mut().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *inv = 1.0 / (var + eps).sqrt();
        let s = *inv;
        row.mapv_inplace(|v| v * s);
    }
    let y = &xhat * &gain + &bias;
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_backward(dy: &Array2<f64>, cache: &LnCache, gain: ArrayView1<f64>, grad: &mut [f64], g_off: usize, b_off: usize) -> Array2<f64> {
    let d = dy.ncols();
    vect_mut(grad, g_off, d).scaled_add(1.0, &(dy * &cache.xhat).sum_axis(Axis(0)));
    vect_mut(grad, b_off, d).scaled_add(1.0, &dy.sum_axis(Axis(0)));
    let dxhat = dy * &gain;
    let mut dx = Array2::zeros(dy.raw_dim());
    let n = d as f64;
    for i in 0..dy.nrows() {
        let dxh = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let mean_d = dxh.sum() / n;
        let mean_dx = dxh.dot(&xh) / n;
        let inv = cache.inv_std[i];
        dx.row_mut(i)
            .assign(&((&dxh - mean_d - &(&xh * mean_dx)) * inv));
    }
    dx
}

fn linear(x: &Array2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    x.dot(&w) + &b
}

fn linear_backward(dy: &Array2<f64>, x: &Array2<f64>, w: ArrayView2<f64>, grad: &mut [f64], w_off: usize, b_off: usize) -> Array2<f64> {
    let (r, c) = w.dim();
    general_mat_mul(1.0, &x.t(), dy, 1.0, &mut mat_mut(grad, w_off, r, c));
    vect_mut(grad, b_off, c).scaled_add(1.0, &dy.sum_axis(Axis(0)));
    dy.dot(&w.t())
}

#[derive(Debug, Clone)]
struct LayerCache {
    /// Attention input (normed for pre-norm, raw for post-norm).
    attn_in: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    ln1: LnCache,
    ffn_in: Array2<f64>,
    hidden_pre: Array2<f64>,
    hidden_act: Array2<f64>,
    ln2: LnCache,
}

/// Saved forward state for one sequence.
#[derive(Debug, Clone)]
pub struct Activations {
    ids: Vec<u32>,
    types: Vec<u8>,
    emb_ln: LnCache,
    layers: Vec<LayerCache>,
    final_ln: Option<LnCache>,
    cls: Array1<f64>,
    pooled: Array1<f64>,
    dropout_mask: Option<Vec<f64>>,
    features: Array1<f64>,
}

fn attention(cfg: &TransformerConfig, p: &[f64], o: &LayerOffsets, u: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>, Vec<Array2<f64>>, Array2<f64>, Array2<f64>) {
    let d = cfg.hidden;
    let dh = cfg.head_dim();
    let q = linear(u, mat(p, o.q_w, d, d), vect(p, o.q_b, d));
    let k = linear(u, mat(p, o.k_w, d, d), vect(p, o.k_b, d));
    let v = linear(u, mat(p, o.v_w, d, d), vect(p, o.v_b, d));
    let scale = 1.0 / (dh as f64).sqrt();
    let n = u.nrows();
    let mut ctx = Array2::zeros((n, d));
    let mut probs = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut a = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        for mut row in a.outer_iter_mut() {
            let m = row.fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
            row.mapv_inplace(|x| (x - m).exp());
            let z = row.sum();
            row.mapv_inplace(|x| x / z);
        }
        ctx.slice_mut(cols).assign(&a.dot(&v.slice(cols)));
        probs.push(a);
    }
    let out = linear(&ctx, mat(p, o.o_w, d, d), vect(p, o.o_b, d));
    (q, k, v, probs, ctx, out)
}

fn attention_backward(cfg: &TransformerConfig, p: &[f64], o: &LayerOffsets, c: &LayerCache, dout: &Array2<f64>, grad: &mut [f64]) -> Array2<f64> {
    let d = cfg.hidden;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let dctx = linear_backward(dout, &c.ctx, mat(p, o.o_w, d, d), grad, o.o_w, o.o_b);
    let n = dout.nrows();
    let mut dq = Array2::zeros((n, d));
    let mut dk = Array2::zeros((n, d));
    let mut dv = Array2::zeros((n, d));
    for h in 0..cfg.heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let a = &c.probs[h];
        let dctx_h = dctx.slice(cols);
        let da = dctx_h.dot(&c.v.slice(cols).t());
        dv.slice_mut(cols).assign(&a.t().dot(&dctx_h));
        let mut ds = a * &da;
        let row_dot = ds.sum_axis(Axis(1));
        for (mut row, (a_row, rd)) in ds.outer_iter_mut().zip(a.outer_iter().zip(row_dot.iter())) {
            row.scaled_add(-rd, &a_row);
        }
        dq.slice_mut(cols).assign(&(ds.dot(&c.k.slice(cols)) * scale));
        dk.slice_mut(cols).assign(&(ds.t().dot(&c.q.slice(cols)) * scale));
    }
    let mut du = linear_backward(&dq, &c.attn_in, mat(p, o.q_w, d, d), grad, o.q_w, o.q_b);
    du += &linear_backward(&dk, &c.attn_in, mat(p, o.k_w, d, d), grad, o.k_w, o.k_b);
    du += &linear_backward(&dv, &c.attn_in, mat(p, o.v_w, d, d), grad, o.v_w, o.v_b);
    du
}

/// Runs the encoder and head. `dropout_mask`, when given, multiplies the
/// head input element-wise (already scaled by `1 / (1 - p)`).
pub fn forward(cfg: &TransformerConfig, layout: &Layout, p: &[f64], ids: &[u32], types: &[u8], dropout_mask: Option<&[f64]>) -> (f64, Activations) {
    let d = cfg.hidden;
    let n = ids.len();
    let eps = cfg.layer_norm_eps;
    let mut x = Array2::zeros((n, d));
    for (i, (&id, &t)) in ids.iter().zip(types).enumerate() {
        let mut row = x.row_mut(i);
        row += &vect(p, layout.word + id as usize * d, d);
        row += &vect(p, layout.pos + i * d, d);
        row += &vect(p, layout.typ + t as usize * d, d);
    }
    let (mut x, emb_ln) = layer_norm(&x, vect(p, layout.emb_g, d), vect(p, layout.emb_b, d), eps);

    let mut layers = Vec::with_capacity(cfg.layers);
    for o in &layout.layers {
        let (g1, b1) = (vect(p, o.ln1_g, d), vect(p, o.ln1_b, d));
        let (g2, b2) = (vect(p, o.ln2_g, d), vect(p, o.ln2_b, d));
        let w1 = mat(p, o.ffn_w1, d, cfg.ffn);
        let w2 = mat(p, o.ffn_w2, cfg.ffn, d);
        let bias1 = vect(p, o.ffn_b1, cfg.ffn);
        let bias2 = vect(p, o.ffn_b2, d);
        let cache = match cfg.norm {
            NormPlacement::Pre => {
                let (attn_in, ln1) = layer_norm(&x, g1, b1, eps);
                let (q, k, v, probs, ctx, attn_out) = attention(cfg, p, o, &attn_in);
                let mid = &x + &attn_out;
                let (ffn_in, ln2) = layer_norm(&mid, g2, b2, eps);
                let hidden_pre = linear(&ffn_in, w1, bias1);
                let hidden_act = hidden_pre.mapv(gelu);
                x = &mid + &linear(&hidden_act, w2, bias2);
                LayerCache { attn_in, q, k, v, probs, ctx, ln1, ffn_in, hidden_pre, hidden_act, ln2 }
            }
            NormPlacement::Post => {
                let attn_in = x.clone();
                let (q, k, v, probs, ctx, attn_out) = attention(cfg, p, o, &attn_in);
                let (mid, ln1) = layer_norm(&(&x + &attn_out), g1, b1, eps);
                let hidden_pre = linear(&mid, w1, bias1);
                let hidden_act = hidden_pre.mapv(gelu);
                let (out, ln2) = layer_norm(&(&mid + &linear(&hidden_act, w2, bias2)), g2, b2, eps);
                x = out;
                LayerCache { attn_in, q, k, v, probs, ctx, ln1, ffn_in: mid, hidden_pre, hidden_act, ln2 }
            }
        };
        layers.push(cache);
    }

    let first = x.slice(s![0..1, ..]).to_owned();
    let (cls_mat, final_ln) = match layout.final_ln {
        Some((g, b)) => {
            let (y, c) = layer_norm(&first, vect(p, g, d), vect(p, b, d), eps);
            (y, Some(c))
        }
        None => (first, None),
    };
    let cls = cls_mat.row(0).to_owned();
    let pooled = match layout.pooler {
        Some((w, b)) => (cls.dot(&mat(p, w, d, d)) + &vect(p, b, d)).mapv(f64::tanh),
        None => cls.clone(),
    };
    let features = match dropout_mask {
        Some(m) => &pooled * &ArrayView1::from(m),
        None => pooled.clone(),
    };
    let score = features.dot(&vect(p, layout.head_w, d)) + p[layout.head_b];
    (
        score,
        Activations {
            ids: ids.to_vec(),
            types: types.to_vec(),
            emb_ln,
            layers,
            final_ln,
            cls,
            pooled,
            dropout_mask: dropout_mask.map(<[f64]>::to_vec),
            features,
        },
    )
}

/// Accumulates `dscore * d(score)/d(params)` into `grad`.
pub fn backward(cfg: &TransformerConfig, layout: &Layout, p: &[f64], acts: &Activations, dscore: f64, grad: &mut [f64]) {
    let d = cfg.hidden;
    let n = acts.ids.len();
    vect_mut(grad, layout.head_w, d).scaled_add(dscore, &acts.features);
    grad[layout.head_b] += dscore;
    let mut dpooled = vect(p, layout.head_w, d).to_owned() * dscore;
    if let Some(m) = &acts.dropout_mask {
        dpooled *= &ArrayView1::from(m.as_slice());
    }
    let dcls = match layout.pooler {
        Some((w, b)) => {
            let dpre = &dpooled * &acts.pooled.mapv(|y| 1.0 - y * y);
            let cls2 = acts.cls.view().insert_axis(Axis(0));
            let dpre2 = dpre.view().insert_axis(Axis(0));
            general_mat_mul(1.0, &cls2.t(), &dpre2, 1.0, &mut mat_mut(grad, w, d, d));
            vect_mut(grad, b, d).scaled_add(1.0, &dpre);
            mat(p, w, d, d).dot(&dpre)
        }
        None => dpooled,
    };
    let dcls = dcls.insert_axis(Axis(0));
    let dfirst = match (layout.final_ln, &acts.final_ln) {
        (Some((g, b)), Some(cache)) => layer_norm_backward(&dcls, cache, vect(p, g, d), grad, g, b),
        _ => dcls,
    };
    let mut dx = Array2::zeros((n, d));
    dx.slice_mut(s![0..1, ..]).assign(&dfirst);

    for (o, c) in layout.layers.iter().zip(&acts.layers).rev() {
        let w1 = mat(p, o.ffn_w1, d, cfg.ffn);
        let w2 = mat(p, o.ffn_w2, cfg.ffn, d);
        let g1 = vect(p, o.ln1_g, d);
        let g2 = vect(p, o.ln2_g, d);
        dx = match cfg.norm {
            NormPlacement::Pre => {
                let dmid = dx;
                let dh = linear_backward(&dmid, &c.hidden_act, w2, grad, o.ffn_w2, o.ffn_b2);
                let dpre = dh * &c.hidden_pre.mapv(gelu_grad);
                let dffn_in = linear_backward(&dpre, &c.ffn_in, w1, grad, o.ffn_w1, o.ffn_b1);
                let dmid = dmid + layer_norm_backward(&dffn_in, &c.ln2, g2, grad, o.ln2_g, o.ln2_b);
                let dattn_in = attention_backward(cfg, p, o, c, &dmid, grad);
                dmid + layer_norm_backward(&dattn_in, &c.ln1, g1, grad, o.ln1_g, o.ln1_b)
            }
            NormPlacement::Post => {
                let ds2 = layer_norm_backward(&dx, &c.ln2, g2, grad, o.ln2_g, o.ln2_b);
                let dh = linear_backward(&ds2, &c.hidden_act, w2, grad, o.ffn_w2, o.ffn_b2);
                let dpre = dh * &c.hidden_pre.mapv(gelu_grad);
                let dmid = ds2 + linear_backward(&dpre, &c.ffn_in, w1, grad, o.ffn_w1, o.ffn_b1);
                let ds1 = layer_norm_backward(&dmid, &c.ln1, g1, grad, o.ln1_g, o.ln1_b);
                let du = attention_backward(cfg, p, o, c, &ds1, grad);
                ds1 + du
            }
        };
    }

    let demb = layer_norm_backward(&dx, &acts.emb_ln, vect(p, layout.emb_g, d), grad, layout.emb_g, layout.emb_b);
    for (i, row) in demb.outer_iter().enumerate() {
        vect_mut(grad, layout.word + acts.ids[i] as usize * d, d).scaled_add(1.0, &row);
        vect_mut(grad, layout.pos + i * d, d).scaled_add(1.0, &row);
        vect_mut(grad, layout.typ + acts.types[i] as usize * d, d).scaled_add(1.0, &row);
    }
}
