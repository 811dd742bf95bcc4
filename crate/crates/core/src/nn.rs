//! A small pre-LayerNorm transformer encoder with hand-written backward pass.
//!
//! All parameters live in one flat `Vec<f64>` so that optimizers, gradient
//! checks and checkpoints treat the model uniformly. The encoder carries a
//! linear output head; the masked-LM normalizer sizes it to the vocabulary
//! and the extraction tagger to the BIO label set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub max_seq: usize,
    pub vocab_size: usize,
    /// Number of learned value-slot index embeddings.
    pub slot_positions: usize,
    /// Width of the output head.
    pub out_dim: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    /// Two layers of width 64; vocabulary, slot and output sizes are filled
    /// in by the model constructors.
    fn default() -> Self {
        ModelConfig {
            layers: 2,
            hidden: 64,
            heads: 4,
            ff_dim: 128,
            max_seq: 64,
            vocab_size: 0,
            slot_positions: 0,
            out_dim: 0,
            seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.heads == 0 || self.hidden % self.heads != 0 {
            return bad("hidden must be divisible by heads");
        }
        if self.layers == 0 || self.hidden == 0 || self.ff_dim == 0 || self.max_seq == 0 {
            return bad("layers, hidden, ff_dim and max_seq must be positive");
        }
        if self.vocab_size == 0 || self.out_dim == 0 {
            return bad("vocab_size and out_dim must be positive");
        }
        Ok(())
    }
}

/// Offset and length of one tensor inside the flat parameter vector.
#[derive(Clone, Copy, Debug)]
pub struct Span {
    pub off: usize,
    pub len: usize,
}

impl Span {
    fn of<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.off..self.off + self.len]
    }

    fn of_mut<'a>(&self, p: &'a mut [f64]) -> &'a mut [f64] {
        &mut p[self.off..self.off + self.len]
    }
}

#[derive(Clone, Debug)]
struct LayerSpans {
    ln1_g: Span,
    ln1_b: Span,
    wq: Span,
    bq: Span,
    wk: Span,
    bk: Span,
    wv: Span,
    bv: Span,
    wo: Span,
    bo: Span,
    ln2_g: Span,
    ln2_b: Span,
    w1: Span,
    b1: Span,
    w2: Span,
    b2: Span,
}

#[derive(Clone, Debug)]
struct Layout {
    tok_emb: Span,
    slot_emb: Span,
    layers: Vec<LayerSpans>,
    lnf_g: Span,
    lnf_b: Span,
    head_w: Span,
    head_b: Span,
}

/// Named tensor entry, used by checkpoints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub off: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Init {
    Zeros,
    Ones,
    Normal,
    Xavier,
}

struct LayoutBuilder {
    total: usize,
    tensors: Vec<(TensorInfo, Init)>,
}

impl LayoutBuilder {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> Span {
        let len = shape.iter().product();
        let span = Span { off: self.total, len };
        self.tensors.push((TensorInfo { name, shape, off: self.total }, init));
        self.total += len;
        span
    }
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: ModelConfig,
    pub params: Vec<f64>,
    layout: Layout,
    tensors: Vec<TensorInfo>,
    positions: Vec<f64>,
}

/// One input sequence: token ids and, per position, an optional value-slot index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderInput {
    pub tokens: Vec<u32>,
    pub slot_index: Vec<Option<u16>>,
}

impl EncoderInput {
    pub fn plain(tokens: Vec<u32>) -> Self {
        let n = tokens.len();
        EncoderInput { tokens, slot_index: vec![None; n] }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

struct LnCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

struct LayerCache {
    ln1: LnCache,
    a: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
    ctx: Vec<f64>,
    ln2: LnCache,
    c: Vec<f64>,
    u: Vec<f64>,
    g: Vec<f64>,
}

/// Activations kept from a forward pass.
pub struct Forward {
    n: usize,
    input: EncoderInput,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    /// Final normalized hidden states, `n x hidden`.
    pub hidden: Vec<f64>,
}

impl Forward {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// `out[n x m] = a[n x k] * w[k x m] + bias`.
fn linear(a: &[f64], w: &[f64], bias: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * m);
    for _ in 0..n {
        out.extend_from_slice(bias);
    }
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let wrow = &w[p * m..(p + 1) * m];
            for (o, &wv) in row.iter_mut().zip(wrow) {
                *o += av * wv;
            }
        }
    }
    out
}

/// Backward of [`linear`]: accumulates weight and bias gradients and
/// returns the input gradient.
fn linear_backward(
    a: &[f64],
    w: &[f64],
    dout: &[f64],
    n: usize,
    k: usize,
    m: usize,
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let mut da = vec![0.0; n * k];
    for i in 0..n {
        let drow = &dout[i * m..(i + 1) * m];
        for (b, &d) in db.iter_mut().zip(drow) {
            *b += d;
        }
        let arow = &a[i * k..(i + 1) * k];
        let darow = &mut da[i * k..(i + 1) * k];
        for p in 0..k {
            let wrow = &w[p * m..(p + 1) * m];
            let dwrow = &mut dw[p * m..(p + 1) * m];
            let av = arow[p];
            let mut acc = 0.0;
            for j in 0..m {
                acc += drow[j] * wrow[j];
                dwrow[j] += av * drow[j];
            }
            darow[p] = acc;
        }
    }
    da
}

fn layer_norm(x: &[f64], g: &[f64], b: &[f64], n: usize, h: usize) -> (Vec<f64>, LnCache) {
    let mut out = vec![0.0; n * h];
    let mut xhat = vec![0.0; n * h];
    let mut rstd = vec![0.0; n];
    for i in 0..n {
        let row = &x[i * h..(i + 1) * h];
        let mean = row.iter().sum::<f64>() / h as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = r;
        for j in 0..h {
            let xh = (row[j] - mean) * r;
            xhat[i * h + j] = xh;
            out[i * h + j] = xh * g[j] + b[j];
        }
    }
    (out, LnCache { xhat, rstd })
}

fn layer_norm_backward(cache: &LnCache, g: &[f64], dout: &[f64], n: usize, h: usize, dg: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let mut dx = vec![0.0; n * h];
    for i in 0..n {
        let xh = &cache.xhat[i * h..(i + 1) * h];
        let dy = &dout[i * h..(i + 1) * h];
        let mut mean_dxh = 0.0;
        let mut mean_dxh_xh = 0.0;
        for j in 0..h {
            dg[j] += dy[j] * xh[j];
            db[j] += dy[j];
            let dxh = dy[j] * g[j];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[j];
        }
        mean_dxh /= h as f64;
        mean_dxh_xh /= h as f64;
        let r = cache.rstd[i];
        for j in 0..h {
            let dxh = dy[j] * g[j];
            dx[i * h + j] = r * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
        }
    }
    dx
}

fn sinusoidal(max_seq: usize, h: usize) -> Vec<f64> {
    let mut pe = vec![0.0; max_seq * h];
    for pos in 0..max_seq {
        for i in 0..h {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10_000f64.powf(2.0 * pair / h as f64);
            pe[pos * h + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}

impl Encoder {
    /// Freshly initialized encoder, deterministic in `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (layout, tensors, inits, total) = Self::build_layout(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, 1.0).expect("valid normal");
        let mut params = vec![0.0; total];
        for (info, init) in tensors.iter().zip(inits) {
            let len: usize = info.shape.iter().product();
            let slice = &mut params[info.off..info.off + len];
            match init {
                Init::Zeros => {}
                Init::Ones => slice.fill(1.0),
                Init::Normal => slice.iter_mut().for_each(|v| *v = normal.sample(&mut rng)),
                Init::Xavier => {
                    let (fan_in, fan_out) = (info.shape[0], info.shape[1]);
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    slice.iter_mut().for_each(|v| *v = rng.gen_range(-a..a));
                }
            }
        }
        let positions = sinusoidal(config.max_seq, config.hidden);
        Ok(Encoder { config, params, layout, tensors, positions })
    }

    /// Encoder with the given parameter vector.
    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<Self> {
        let mut enc = Encoder::new(ModelConfig { seed: 0, ..config.clone() })?;
        if params.len() != enc.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                enc.params.len(),
                params.len()
            )));
        }
        enc.config = config;
        enc.params = params;
        Ok(enc)
    }

    fn build_layout(cfg: &ModelConfig) -> (Layout, Vec<TensorInfo>, Vec<Init>, usize) {
        let h = cfg.hidden;
        let f = cfg.ff_dim;
        let mut b = LayoutBuilder { total: 0, tensors: Vec::new() };
        let tok_emb = b.add("tok_emb".into(), vec![cfg.vocab_size, h], Init::Normal);
        let slot_emb = b.add("slot_emb".into(), vec![cfg.slot_positions.max(1), h], Init::Normal);
        let mut layers = Vec::new();
        for l in 0..cfg.layers {
            let mut add = |n: &str, shape: Vec<usize>, init| b.add(format!("layer{l}.{n}"), shape, init);
            layers.push(LayerSpans {
                ln1_g: add("ln1.gamma", vec![h], Init::Ones),
                ln1_b: add("ln1.beta", vec![h], Init::Zeros),
                wq: add("attn.wq", vec![h, h], Init::Xavier),
                bq: add("attn.bq", vec![h], Init::Zeros),
                wk: add("attn.wk", vec![h, h], Init::Xavier),
                bk: add("attn.bk", vec![h], Init::Zeros),
                wv: add("attn.wv", vec![h, h], Init::Xavier),
                bv: add("attn.bv", vec![h], Init::Zeros),
                wo: add("attn.wo", vec![h, h], Init::Xavier),
                bo: add("attn.bo", vec![h], Init::Zeros),
                ln2_g: add("ln2.gamma", vec![h], Init::Ones),
                ln2_b: add("ln2.beta", vec![h], Init::Zeros),
                w1: add("ff.w1", vec![h, f], Init::Xavier),
                b1: add("ff.b1", vec![f], Init::Zeros),
                w2: add("ff.w2", vec![f, h], Init::Xavier),
                b2: add("ff.b2", vec![h], Init::Zeros),
            });
        }
        let lnf_g = b.add("lnf.gamma".into(), vec![h], Init::Ones);
        let lnf_b = b.add("lnf.beta".into(), vec![h], Init::Zeros);
        let head_w = b.add("head.w".into(), vec![h, cfg.out_dim], Init::Xavier);
        let head_b = b.add("head.b".into(), vec![cfg.out_dim], Init::Zeros);
        let layout = Layout { tok_emb, slot_emb, layers, lnf_g, lnf_b, head_w, head_b };
        let (tensors, inits) = b.tensors.into_iter().unzip();
        (layout, tensors, inits, b.total)
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.tensors
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, input: &EncoderInput) -> Result<Forward> {
        let cfg = &self.config;
        let n = input.len();
        if n > cfg.max_seq {
            return Err(Error::SequenceTooLong { len: n, max: cfg.max_seq });
        }
        let h = cfg.hidden;
        let f = cfg.ff_dim;
        let heads = cfg.heads;
        let dh = h / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let p = &self.params;
        let lay = &self.layout;

        let tok_emb = lay.tok_emb.of(p);
        let slot_emb = lay.slot_emb.of(p);
        let mut x = vec![0.0; n * h];
        for i in 0..n {
            let t = input.tokens[i] as usize;
            if t >= cfg.vocab_size {
                return Err(Error::Data(format!("token id {t} outside vocabulary of {}", cfg.vocab_size)));
            }
            let row = &mut x[i * h..(i + 1) * h];
            row.copy_from_slice(&tok_emb[t * h..(t + 1) * h]);
            for (r, pe) in row.iter_mut().zip(&self.positions[i * h..(i + 1) * h]) {
                *r += pe;
            }
            if let Some(s) = input.slot_index[i] {
                let s = usize::from(s).min(cfg.slot_positions.max(1) - 1);
                for (r, e) in row.iter_mut().zip(&slot_emb[s * h..(s + 1) * h]) {
                    *r += e;
                }
            }
        }

        let mut caches = Vec::with_capacity(cfg.layers);
        for ls in &lay.layers {
            let (a, ln1) = layer_norm(&x, ls.ln1_g.of(p), ls.ln1_b.of(p), n, h);
            let q = linear(&a, ls.wq.of(p), ls.bq.of(p), n, h, h);
            let k = linear(&a, ls.wk.of(p), ls.bk.of(p), n, h, h);
            let v = linear(&a, ls.wv.of(p), ls.bv.of(p), n, h, h);
            let mut probs = vec![0.0; heads * n * n];
            let mut ctx = vec![0.0; n * h];
            for hd in 0..heads {
                let o = hd * dh;
                for i in 0..n {
                    let prow = &mut probs[(hd * n + i) * n..(hd * n + i + 1) * n];
                    let qi = &q[i * h + o..i * h + o + dh];
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..n {
                        let kj = &k[j * h + o..j * h + o + dh];
                        let s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                        prow[j] = s;
                        max = max.max(s);
                    }
                    let mut z = 0.0;
                    for s in prow.iter_mut() {
                        *s = (*s - max).exp();
                        z += *s;
                    }
                    for s in prow.iter_mut() {
                        *s /= z;
                    }
                    let crow = &mut ctx[i * h + o..i * h + o + dh];
                    for j in 0..n {
                        let pij = prow[j];
                        for (c, vv) in crow.iter_mut().zip(&v[j * h + o..j * h + o + dh]) {
                            *c += pij * vv;
                        }
                    }
                }
            }
            let attn = linear(&ctx, ls.wo.of(p), ls.bo.of(p), n, h, h);
            for (xi, ai) in x.iter_mut().zip(&attn) {
                *xi += ai;
            }
            let (c, ln2) = layer_norm(&x, ls.ln2_g.of(p), ls.ln2_b.of(p), n, h);
            let u = linear(&c, ls.w1.of(p), ls.b1.of(p), n, h, f);
            let g: Vec<f64> = u.iter().map(|&z| gelu(z)).collect();
            let ff = linear(&g, ls.w2.of(p), ls.b2.of(p), n, f, h);
            for (xi, fi) in x.iter_mut().zip(&ff) {
                *xi += fi;
            }
            caches.push(LayerCache { ln1, a, q, k, v, probs, ctx, ln2, c, u, g });
        }
        let (hidden, lnf) = layer_norm(&x, lay.lnf_g.of(p), lay.lnf_b.of(p), n, h);
        Ok(Forward { n, input: input.clone(), layers: caches, lnf, hidden })
    }

    /// Output-head scores at position `pos`.
    pub fn logits_at(&self, fwd: &Forward, pos: usize) -> Vec<f64> {
        let h = self.config.hidden;
        let m = self.config.out_dim;
        let p = &self.params;
        linear(&fwd.hidden[pos * h..(pos + 1) * h], self.layout.head_w.of(p), self.layout.head_b.of(p), 1, h, m)
    }

    /// Back-propagates output-head gradients `(position, d_logits)` and
    /// accumulates parameter gradients into `grads`.
    pub fn backward(&self, fwd: &Forward, d_logits: &[(usize, Vec<f64>)], grads: &mut [f64]) {
        let cfg = &self.config;
        let n = fwd.n;
        let h = cfg.hidden;
        let f = cfg.ff_dim;
        let heads = cfg.heads;
        let dh = h / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let m = cfg.out_dim;
        let p = &self.params;
        let lay = &self.layout;

        let mut dhidden = vec![0.0; n * h];
        {
            let w = lay.head_w.of(p);
            let (dw_all, rest) = grads.split_at_mut(lay.head_b.off);
            let dw = &mut dw_all[lay.head_w.off..lay.head_w.off + lay.head_w.len];
            let db = &mut rest[..lay.head_b.len];
            for (pos, dl) in d_logits {
                let dx = linear_backward(&fwd.hidden[pos * h..(pos + 1) * h], w, dl, 1, h, m, dw, db);
                for (a, b) in dhidden[pos * h..(pos + 1) * h].iter_mut().zip(dx) {
                    *a += b;
                }
            }
        }

        let mut dx = {
            let g = lay.lnf_g.of(p);
            let mut dg = vec![0.0; h];
            let mut db = vec![0.0; h];
            let dx = layer_norm_backward(&fwd.lnf, g, &dhidden, n, h, &mut dg, &mut db);
            add_into(lay.lnf_g.of_mut(grads), &dg);
            add_into(lay.lnf_b.of_mut(grads), &db);
            dx
        };

        for (ls, cache) in lay.layers.iter().zip(&fwd.layers).rev() {
            // Feed-forward block: x += W2 gelu(W1 LN2(x)).
            let mut dw2 = vec![0.0; f * h];
            let mut db2 = vec![0.0; h];
            let dg = linear_backward(&cache.g, ls.w2.of(p), &dx, n, f, h, &mut dw2, &mut db2);
            let du: Vec<f64> = dg.iter().zip(&cache.u).map(|(d, &u)| d * gelu_grad(u)).collect();
            let mut dw1 = vec![0.0; h * f];
            let mut db1 = vec![0.0; f];
            let dc = linear_backward(&cache.c, ls.w1.of(p), &du, n, h, f, &mut dw1, &mut db1);
            let mut dg2 = vec![0.0; h];
            let mut dbeta2 = vec![0.0; h];
            let dln2 = layer_norm_backward(&cache.ln2, ls.ln2_g.of(p), &dc, n, h, &mut dg2, &mut dbeta2);
            add_into(ls.w2.of_mut(grads), &dw2);
            add_into(ls.b2.of_mut(grads), &db2);
            add_into(ls.w1.of_mut(grads), &dw1);
            add_into(ls.b1.of_mut(grads), &db1);
            add_into(ls.ln2_g.of_mut(grads), &dg2);
            add_into(ls.ln2_b.of_mut(grads), &dbeta2);
            for (a, b) in dx.iter_mut().zip(&dln2) {
                *a += b;
            }

            // Attention block: x += Wo attn(LN1(x)).
            let mut dwo = vec![0.0; h * h];
            let mut dbo = vec![0.0; h];
            let dctx = linear_backward(&cache.ctx, ls.wo.of(p), &dx, n, h, h, &mut dwo, &mut dbo);
            let mut dq = vec![0.0; n * h];
            let mut dk = vec![0.0; n * h];
            let mut dv = vec![0.0; n * h];
            let mut dp = vec![0.0; n];
            for hd in 0..heads {
                let o = hd * dh;
                for i in 0..n {
                    let prow = &cache.probs[(hd * n + i) * n..(hd * n + i + 1) * n];
                    let dci = &dctx[i * h + o..i * h + o + dh];
                    let mut dot = 0.0;
                    for j in 0..n {
                        let vj = &cache.v[j * h + o..j * h + o + dh];
                        dp[j] = dci.iter().zip(vj).map(|(a, b)| a * b).sum();
                        dot += dp[j] * prow[j];
                        for (dvv, &d) in dv[j * h + o..j * h + o + dh].iter_mut().zip(dci) {
                            *dvv += prow[j] * d;
                        }
                    }
                    for j in 0..n {
                        let ds = prow[j] * (dp[j] - dot) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        for t in 0..dh {
                            dq[i * h + o + t] += ds * cache.k[j * h + o + t];
                            dk[j * h + o + t] += ds * cache.q[i * h + o + t];
                        }
                    }
                }
            }
            let mut da = vec![0.0; n * h];
            let mut dwq = vec![0.0; h * h];
            let mut dbq = vec![0.0; h];
            let mut dwk = vec![0.0; h * h];
            let mut dbk = vec![0.0; h];
            let mut dwv = vec![0.0; h * h];
            let mut dbv = vec![0.0; h];
            for (dproj, w, dw, db) in [
                (&dq, ls.wq, &mut dwq, &mut dbq),
                (&dk, ls.wk, &mut dwk, &mut dbk),
                (&dv, ls.wv, &mut dwv, &mut dbv),
            ] {
                let part = linear_backward(&cache.a, w.of(p), dproj, n, h, h, dw, db);
                for (a, b) in da.iter_mut().zip(part) {
                    *a += b;
                }
            }
            let mut dg1 = vec![0.0; h];
            let mut dbeta1 = vec![0.0; h];
            let dln1 = layer_norm_backward(&cache.ln1, ls.ln1_g.of(p), &da, n, h, &mut dg1, &mut dbeta1);
            add_into(ls.wo.of_mut(grads), &dwo);
            add_into(ls.bo.of_mut(grads), &dbo);
            add_into(ls.wq.of_mut(grads), &dwq);
            add_into(ls.bq.of_mut(grads), &dbq);
            add_into(ls.wk.of_mut(grads), &dwk);
            add_into(ls.bk.of_mut(grads), &dbk);
            add_into(ls.wv.of_mut(grads), &dwv);
            add_into(ls.bv.of_mut(grads), &dbv);
            add_into(ls.ln1_g.of_mut(grads), &dg1);
            add_into(ls.ln1_b.of_mut(grads), &dbeta1);
            for (a, b) in dx.iter_mut().zip(&dln1) {
                *a += b;
            }
        }

        let dtok = lay.tok_emb.off;
        let dslot = lay.slot_emb.off;
        for i in 0..n {
            let t = fwd.input.tokens[i] as usize;
            let row = &dx[i * h..(i + 1) * h];
            add_into(&mut grads[dtok + t * h..dtok + (t + 1) * h], row);
            if let Some(s) = fwd.input.slot_index[i] {
                let s = usize::from(s).min(cfg.slot_positions.max(1) - 1);
                add_into(&mut grads[dslot + s * h..dslot + (s + 1) * h], row);
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Cross-entropy of `target` and its gradient w.r.t. the logits, scaled by `weight`.
pub fn cross_entropy(logits: &[f64], target: usize, weight: f64) -> (f64, Vec<f64>) {
    let lp = log_softmax(logits);
    let mut grad: Vec<f64> = lp.iter().map(|l| l.exp() * weight).collect();
    grad[target] -= weight;
    (-lp[target] * weight, grad)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    /// Plain stochastic gradient descent.
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam { lr: 0.003, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Optimizer state over a flat parameter vector.
pub struct OptimizerState {
    kind: Optimizer,
    clip: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(kind: Optimizer, clip: f64, len: usize) -> Self {
        let (m, v) = match kind {
            Optimizer::Sgd { .. } => (Vec::new(), Vec::new()),
            Optimizer::Adam { .. } => (vec![0.0; len], vec![0.0; len]),
        };
        OptimizerState { kind, clip, step: 0, m, v }
    }

    /// Clips `grads` to the configured global norm and applies one update.
    /// Returns the pre-clipping gradient norm.
    pub fn apply(&mut self, params: &mut [f64], grads: &mut [f64]) -> f64 {
        let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        if self.clip > 0.0 && norm > self.clip {
            let s = self.clip / norm;
            grads.iter_mut().for_each(|g| *g *= s);
        }
        self.step += 1;
        match self.kind {
            Optimizer::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grads.iter()) {
                    *p -= lr * g;
                }
            }
            Optimizer::Adam { lr, beta1, beta2, eps } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for i in 0..params.len() {
                    let g = grads[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + eps);
                }
            }
        }
        norm
    }
}
