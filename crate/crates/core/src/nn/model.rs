//! Encoder architecture, parameter layout, forward and backward passes.
//!
//! Post-norm encoder blocks (multi-head self-attention and a GELU
//! feed-forward, each wrapped in residual + layer norm) over summed token
//! and absolute position embeddings. The masked-LM head is a dense + GELU
//! + layer norm transform followed by a decoder tied to the token
//! embedding matrix, plus an output bias.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ops::{self, gelu, gelu_grad, gemm, layer_norm, layer_norm_backward, linear, linear_backward, LnCache};
use super::Real;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionalEmbedding {
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_size: usize,
    pub ffn_size: usize,
    pub num_heads: usize,
    pub dropout_rate: f64,
    pub attention_dropout_rate: f64,
    pub activation: Activation,
    pub positional_embedding: PositionalEmbedding,
    pub max_sequence_length: usize,
    pub vocab_size: usize,
    pub mask_rate: f64,
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale default: 2 layers, hidden 128, FFN 512, 4 heads.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            num_layers: 2,
            hidden_size: 128,
            ffn_size: 512,
            num_heads: 4,
            dropout_rate: 0.1,
            attention_dropout_rate: 0.1,
            activation: Activation::Gelu,
            positional_embedding: PositionalEmbedding::Absolute,
            max_sequence_length: 256,
            vocab_size,
            mask_rate: 0.15,
            seed: 0,
        }
    }

    /// 12 layers, hidden 768, FFN 3072, 12 heads, dropout 0.1.
    pub fn paper_full(vocab_size: usize) -> Self {
        Self {
            num_layers: 12,
            hidden_size: 768,
            ffn_size: 3072,
            num_heads: 12,
            max_sequence_length: 512,
            ..Self::desk(vocab_size)
        }
    }

    /// For tests and overfitting checks.
    pub fn tiny(vocab_size: usize) -> Self {
        Self {
            num_layers: 1,
            hidden_size: 32,
            ffn_size: 64,
            num_heads: 2,
            dropout_rate: 0.0,
            attention_dropout_rate: 0.0,
            max_sequence_length: 64,
            ..Self::desk(vocab_size)
        }
    }

    pub fn preset(name: &str, vocab_size: usize) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk(vocab_size)),
            "paper-full" => Ok(Self::paper_full(vocab_size)),
            "tiny" => Ok(Self::tiny(vocab_size)),
            other => Err(Error::Config(alloc::format!("unknown model preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.num_layers == 0 || self.hidden_size == 0 || self.ffn_size == 0 || self.num_heads == 0 {
            return fail("layer, hidden, ffn and head counts must be positive");
        }
        if self.hidden_size % self.num_heads != 0 {
            return fail("hidden_size must be divisible by num_heads");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) || !(0.0..1.0).contains(&self.attention_dropout_rate) {
            return fail("dropout rates must lie in [0, 1)");
        }
        if !(self.mask_rate > 0.0 && self.mask_rate < 1.0) {
            return fail("mask_rate must lie in (0, 1)");
        }
        if self.vocab_size <= crate::bpe::BYTE_OFFSET as usize {
            return fail("vocab_size must exceed the special tokens");
        }
        if self.max_sequence_length < 3 {
            return fail("max_sequence_length must be at least 3");
        }
        Ok(())
    }
}

/// Name, shape and offset of one parameter tensor in the flat buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone)]
struct LayerSlots {
    q_w: Range<usize>,
    q_b: Range<usize>,
    k_w: Range<usize>,
    k_b: Range<usize>,
    v_w: Range<usize>,
    v_b: Range<usize>,
    o_w: Range<usize>,
    o_b: Range<usize>,
    ln1_g: Range<usize>,
    ln1_b: Range<usize>,
    ff1_w: Range<usize>,
    ff1_b: Range<usize>,
    ff2_w: Range<usize>,
    ff2_b: Range<usize>,
    ln2_g: Range<usize>,
    ln2_b: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct Layout {
    specs: Vec<ParamSpec>,
    tok_emb: Range<usize>,
    pos_emb: Range<usize>,
    emb_ln_g: Range<usize>,
    emb_ln_b: Range<usize>,
    layers: Vec<LayerSlots>,
    head_w: Range<usize>,
    head_b: Range<usize>,
    head_ln_g: Range<usize>,
    head_ln_b: Range<usize>,
    out_b: Range<usize>,
    total: usize,
}

impl Layout {
    pub fn new(c: &ModelConfig) -> Self {
        let (h, f, v, p) = (c.hidden_size, c.ffn_size, c.vocab_size, c.max_sequence_length);
        let mut specs: Vec<ParamSpec> = Vec::new();
        let mut add = |name: String, shape: Vec<usize>| {
            let offset = specs.last().map_or(0, |s| s.offset + s.len());
            specs.push(ParamSpec { name, shape, offset });
            let s = specs.last().unwrap();
            s.range()
        };
        let tok_emb = add("embeddings.token".into(), alloc::vec![v, h]);
        let pos_emb = add("embeddings.position".into(), alloc::vec![p, h]);
        let emb_ln_g = add("embeddings.norm.gamma".into(), alloc::vec![h]);
        let emb_ln_b = add("embeddings.norm.beta".into(), alloc::vec![h]);
        let layers = (0..c.num_layers)
            .map(|l| {
                let mut t = |suffix: &str, shape: Vec<usize>| add(alloc::format!("layers.{l}.{suffix}"), shape);
                LayerSlots {
                    q_w: t("attention.query.weight", alloc::vec![h, h]),
                    q_b: t("attention.query.bias", alloc::vec![h]),
                    k_w: t("attention.key.weight", alloc::vec![h, h]),
                    k_b: t("attention.key.bias", alloc::vec![h]),
                    v_w: t("attention.value.weight", alloc::vec![h, h]),
                    v_b: t("attention.value.bias", alloc::vec![h]),
                    o_w: t("attention.output.weight", alloc::vec![h, h]),
                    o_b: t("attention.output.bias", alloc::vec![h]),
                    ln1_g: t("attention.norm.gamma", alloc::vec![h]),
                    ln1_b: t("attention.norm.beta", alloc::vec![h]),
                    ff1_w: t("ffn.inner.weight", alloc::vec![h, f]),
                    ff1_b: t("ffn.inner.bias", alloc::vec![f]),
                    ff2_w: t("ffn.output.weight", alloc::vec![f, h]),
                    ff2_b: t("ffn.output.bias", alloc::vec![h]),
                    ln2_g: t("ffn.norm.gamma", alloc::vec![h]),
                    ln2_b: t("ffn.norm.beta", alloc::vec![h]),
                }
            })
            .collect();
        let head_w = add("mlm_head.dense.weight".into(), alloc::vec![h, h]);
        let head_b = add("mlm_head.dense.bias".into(), alloc::vec![h]);
        let head_ln_g = add("mlm_head.norm.gamma".into(), alloc::vec![h]);
        let head_ln_b = add("mlm_head.norm.beta".into(), alloc::vec![h]);
        let out_b = add("mlm_head.output.bias".into(), alloc::vec![v]);
        let total = specs.last().map_or(0, |s| s.offset + s.len());
        Self {
            specs,
            tok_emb,
            pos_emb,
            emb_ln_g,
            emb_ln_b,
            layers,
            head_w,
            head_b,
            head_ln_g,
            head_ln_b,
            out_b,
            total,
        }
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

/// Two disjoint mutable views into the gradient buffer.
fn pair_mut<'a, T>(buf: &'a mut [T], a: &Range<usize>, b: &Range<usize>) -> (&'a mut [T], &'a mut [T]) {
    assert!(a.end <= b.start, "ranges must be ordered and disjoint");
    let (lo, hi) = buf.split_at_mut(b.start);
    (&mut lo[a.clone()], &mut hi[..b.len()])
}

fn dropout_mask<T: Real>(len: usize, rate: f64, rng: Option<&mut ChaCha8Rng>) -> Option<Vec<T>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = T::lit(1.0 / (1.0 - rate));
    Some((0..len).map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep }).collect())
}

fn apply_mask<T: Real>(x: &mut [T], mask: &Option<Vec<T>>) {
    if let Some(m) = mask {
        for (v, &k) in x.iter_mut().zip(m) {
            *v *= k;
        }
    }
}

struct LayerTrace<T> {
    input: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    probs: Vec<T>,
    probs_mask: Option<Vec<T>>,
    ctx: Vec<T>,
    attn_mask: Option<Vec<T>>,
    ln1: LnCache<T>,
    h1: Vec<T>,
    z: Vec<T>,
    gz: Vec<T>,
    ffn_mask: Option<Vec<T>>,
    ln2: LnCache<T>,
}

/// Everything the backward pass needs from one forward pass.
pub struct Trace<T> {
    ids: Vec<u32>,
    emb_ln: LnCache<T>,
    emb_mask: Option<Vec<T>>,
    layers: Vec<LayerTrace<T>>,
    selected: Vec<usize>,
    head_in: Vec<T>,
    head_pre: Vec<T>,
    head_ln: LnCache<T>,
    head_out: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    layout: Layout,
    params: Vec<T>,
}

impl PartialEq for Layout {
    fn eq(&self, other: &Self) -> bool {
        self.specs == other.specs
    }
}

/// Standard normal draw (Box-Muller).
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

impl<T: Real> Model<T> {
    /// Random initialization: N(0, 0.02) weights and embeddings, zero biases,
    /// unit layer-norm gains. Deterministic in `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = alloc::vec![T::zero(); layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for spec in &layout.specs {
            let name = spec.name.as_str();
            let slot = &mut params[spec.range()];
            if name.ends_with(".gamma") {
                slot.fill(T::one());
            } else if name.ends_with(".weight") || name.starts_with("embeddings.token") || name.starts_with("embeddings.position") {
                for v in slot.iter_mut() {
                    *v = T::lit(0.02 * normal(&mut rng));
                }
            }
        }
        Ok(Self { config, layout, params })
    }

    /// Rebuilds a model from stored parameters.
    pub fn from_params(config: ModelConfig, params: Vec<T>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(Error::Config(alloc::format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Self { config, layout, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn p(&self, r: &Range<usize>) -> &[T] {
        &self.params[r.clone()]
    }

    fn check_ids(&self, ids: &[u32]) -> Result<()> {
        if ids.is_empty() || ids.len() > self.config.max_sequence_length {
            return Err(Error::Config(alloc::format!(
                "sequence length {} outside 1..={}",
                ids.len(),
                self.config.max_sequence_length
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(Error::UnknownTokenId(bad));
        }
        Ok(())
    }

    /// Forward pass over one sequence; returns logits (rows = `selected`
    /// positions, columns = vocabulary) and the trace for backward.
    pub fn forward_trace(
        &self,
        ids: &[u32],
        selected: &[usize],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Vec<T>, Trace<T>)> {
        self.check_ids(ids)?;
        if let Some(&bad) = selected.iter().find(|&&p| p >= ids.len()) {
            return Err(Error::Config(alloc::format!("selected position {bad} out of range")));
        }
        let c = &self.config;
        let (n, h, f, v) = (ids.len(), c.hidden_size, c.ffn_size, c.vocab_size);
        let nh = c.num_heads;
        let d = h / nh;
        let scale = T::one() / T::from_usize(d).unwrap().sqrt();
        let l = &self.layout;

        let tok = self.p(&l.tok_emb);
        let pos = self.p(&l.pos_emb);
        let mut x0 = alloc::vec![T::zero(); n * h];
        for (i, &id) in ids.iter().enumerate() {
            let row = &mut x0[i * h..(i + 1) * h];
            let te = &tok[id as usize * h..(id as usize + 1) * h];
            let pe = &pos[i * h..(i + 1) * h];
            for j in 0..h {
                row[j] = te[j] + pe[j];
            }
        }
        let (mut hidden, emb_ln) = layer_norm(&x0, h, self.p(&l.emb_ln_g), self.p(&l.emb_ln_b));
        let emb_mask = dropout_mask(n * h, c.dropout_rate, rng.as_deref_mut());
        apply_mask(&mut hidden, &emb_mask);

        let mut layers = Vec::with_capacity(c.num_layers);
        for s in &l.layers {
            let input = hidden;
            let q = linear(&input, n, h, self.p(&s.q_w), self.p(&s.q_b), h);
            let k = linear(&input, n, h, self.p(&s.k_w), self.p(&s.k_b), h);
            let vv = linear(&input, n, h, self.p(&s.v_w), self.p(&s.v_b), h);
            let mut probs = alloc::vec![T::zero(); nh * n * n];
            let probs_mask = dropout_mask(nh * n * n, c.attention_dropout_rate, rng.as_deref_mut());
            let mut ctx = alloc::vec![T::zero(); n * h];
            let mut qh = alloc::vec![T::zero(); n * d];
            let mut kh = alloc::vec![T::zero(); n * d];
            let mut vh = alloc::vec![T::zero(); n * d];
            let mut ch = alloc::vec![T::zero(); n * d];
            for a in 0..nh {
                gather_head(&q, h, a, d, &mut qh);
                gather_head(&k, h, a, d, &mut kh);
                gather_head(&vv, h, a, d, &mut vh);
                let p = &mut probs[a * n * n..(a + 1) * n * n];
                gemm(n, d, n, &qh, false, &kh, true, p, T::zero());
                for row in p.chunks_exact_mut(n) {
                    for x in row.iter_mut() {
                        *x *= scale;
                    }
                    ops::softmax_in_place(row);
                }
                match &probs_mask {
                    Some(m) => {
                        let pd: Vec<T> = p.iter().zip(&m[a * n * n..(a + 1) * n * n]).map(|(&x, &k)| x * k).collect();
                        gemm(n, n, d, &pd, false, &vh, false, &mut ch, T::zero());
                    }
                    None => gemm(n, n, d, p, false, &vh, false, &mut ch, T::zero()),
                }
                scatter_head(&ch, h, a, d, &mut ctx);
            }
            let mut attn = linear(&ctx, n, h, self.p(&s.o_w), self.p(&s.o_b), h);
            let attn_mask = dropout_mask(n * h, c.dropout_rate, rng.as_deref_mut());
            apply_mask(&mut attn, &attn_mask);
            for (a, &x) in attn.iter_mut().zip(&input) {
                *a += x;
            }
            let (h1, ln1) = layer_norm(&attn, h, self.p(&s.ln1_g), self.p(&s.ln1_b));
            let z = linear(&h1, n, h, self.p(&s.ff1_w), self.p(&s.ff1_b), f);
            let gz: Vec<T> = z.iter().map(|&x| gelu(x)).collect();
            let mut y = linear(&gz, n, f, self.p(&s.ff2_w), self.p(&s.ff2_b), h);
            let ffn_mask = dropout_mask(n * h, c.dropout_rate, rng.as_deref_mut());
            apply_mask(&mut y, &ffn_mask);
            for (a, &x) in y.iter_mut().zip(&h1) {
                *a += x;
            }
            let (out, ln2) = layer_norm(&y, h, self.p(&s.ln2_g), self.p(&s.ln2_b));
            layers.push(LayerTrace {
                input,
                q,
                k,
                v: vv,
                probs,
                probs_mask,
                ctx,
                attn_mask,
                ln1,
                h1,
                z,
                gz,
                ffn_mask,
                ln2,
            });
            hidden = out;
        }

        let m = selected.len();
        let mut head_in = alloc::vec![T::zero(); m * h];
        for (r, &p) in selected.iter().enumerate() {
            head_in[r * h..(r + 1) * h].copy_from_slice(&hidden[p * h..(p + 1) * h]);
        }
        let head_pre = linear(&head_in, m, h, self.p(&l.head_w), self.p(&l.head_b), h);
        let act: Vec<T> = head_pre.iter().map(|&x| gelu(x)).collect();
        let (head_out, head_ln) = layer_norm(&act, h, self.p(&l.head_ln_g), self.p(&l.head_ln_b));
        let mut logits = alloc::vec![T::zero(); m * v];
        for row in logits.chunks_exact_mut(v) {
            row.copy_from_slice(self.p(&l.out_b));
        }
        gemm(m, h, v, &head_out, false, tok, true, &mut logits, T::one());

        Ok((
            logits,
            Trace {
                ids: ids.to_vec(),
                emb_ln,
                emb_mask,
                layers,
                selected: selected.to_vec(),
                head_in,
                head_pre,
                head_ln,
                head_out,
            },
        ))
    }

    /// Accumulates parameter gradients given `dlogits` (same shape as the
    /// logits returned by [`Model::forward_trace`]).
    pub fn backward(&self, trace: &Trace<T>, dlogits: &[T], grad: &mut [T]) {
        assert_eq!(grad.len(), self.params.len());
        let c = &self.config;
        let l = &self.layout;
        let (n, h, f, v) = (trace.ids.len(), c.hidden_size, c.ffn_size, c.vocab_size);
        let nh = c.num_heads;
        let d = h / nh;
        let scale = T::one() / T::from_usize(d).unwrap().sqrt();
        let m = trace.selected.len();
        let tok = self.p(&l.tok_emb);

        // Tied decoder and output bias.
        {
            let (dtok, dout_b) = pair_mut(grad, &l.tok_emb, &l.out_b);
            for row in dlogits.chunks_exact(v) {
                for (g, &x) in dout_b.iter_mut().zip(row) {
                    *g += x;
                }
            }
            gemm(v, m, h, dlogits, true, &trace.head_out, false, dtok, T::one());
        }
        let mut du = alloc::vec![T::zero(); m * h];
        gemm(m, v, h, dlogits, false, tok, false, &mut du, T::zero());
        let dact = {
            let (dg, db) = pair_mut(grad, &l.head_ln_g, &l.head_ln_b);
            layer_norm_backward(&du, h, self.p(&l.head_ln_g), &trace.head_ln, dg, db)
        };
        let dpre: Vec<T> = dact.iter().zip(&trace.head_pre).map(|(&g, &x)| g * gelu_grad(x)).collect();
        let dhead_in = {
            let (dw, db) = pair_mut(grad, &l.head_w, &l.head_b);
            linear_backward(&trace.head_in, m, h, self.p(&l.head_w), h, &dpre, dw, db)
        };
        let mut dhidden = alloc::vec![T::zero(); n * h];
        for (r, &p) in trace.selected.iter().enumerate() {
            for j in 0..h {
                dhidden[p * h + j] += dhead_in[r * h + j];
            }
        }

        let mut qh = alloc::vec![T::zero(); n * d];
        let mut kh = alloc::vec![T::zero(); n * d];
        let mut vh = alloc::vec![T::zero(); n * d];
        let mut dch = alloc::vec![T::zero(); n * d];
        let mut dpd = alloc::vec![T::zero(); n * n];
        let mut dqh = alloc::vec![T::zero(); n * d];
        let mut dkh = alloc::vec![T::zero(); n * d];
        let mut dvh = alloc::vec![T::zero(); n * d];
        for (s, t) in l.layers.iter().zip(&trace.layers).rev() {
            // out = LN2(h1 + drop(ffn(h1)))
            let dsum2 = {
                let (dg, db) = pair_mut(grad, &s.ln2_g, &s.ln2_b);
                layer_norm_backward(&dhidden, h, self.p(&s.ln2_g), &t.ln2, dg, db)
            };
            let mut dy = dsum2.clone();
            apply_mask(&mut dy, &t.ffn_mask);
            let dgz = {
                let (dw, db) = pair_mut(grad, &s.ff2_w, &s.ff2_b);
                linear_backward(&t.gz, n, f, self.p(&s.ff2_w), h, &dy, dw, db)
            };
            let dz: Vec<T> = dgz.iter().zip(&t.z).map(|(&g, &x)| g * gelu_grad(x)).collect();
            let mut dh1 = {
                let (dw, db) = pair_mut(grad, &s.ff1_w, &s.ff1_b);
                linear_backward(&t.h1, n, h, self.p(&s.ff1_w), f, &dz, dw, db)
            };
            for (a, &b) in dh1.iter_mut().zip(&dsum2) {
                *a += b;
            }
            // h1 = LN1(input + drop(attn(input)))
            let dsum1 = {
                let (dg, db) = pair_mut(grad, &s.ln1_g, &s.ln1_b);
                layer_norm_backward(&dh1, h, self.p(&s.ln1_g), &t.ln1, dg, db)
            };
            let mut dattn = dsum1.clone();
            apply_mask(&mut dattn, &t.attn_mask);
            let dctx = {
                let (dw, db) = pair_mut(grad, &s.o_w, &s.o_b);
                linear_backward(&t.ctx, n, h, self.p(&s.o_w), h, &dattn, dw, db)
            };
            let mut dq = alloc::vec![T::zero(); n * h];
            let mut dk = alloc::vec![T::zero(); n * h];
            let mut dv = alloc::vec![T::zero(); n * h];
            for a in 0..nh {
                gather_head(&t.q, h, a, d, &mut qh);
                gather_head(&t.k, h, a, d, &mut kh);
                gather_head(&t.v, h, a, d, &mut vh);
                gather_head(&dctx, h, a, d, &mut dch);
                let p = &t.probs[a * n * n..(a + 1) * n * n];
                let mask = t.probs_mask.as_ref().map(|mk| &mk[a * n * n..(a + 1) * n * n]);
                let pd: Vec<T> = match mask {
                    Some(mk) => p.iter().zip(mk).map(|(&x, &k)| x * k).collect(),
                    None => p.to_vec(),
                };
                gemm(n, d, n, &dch, false, &vh, true, &mut dpd, T::zero());
                gemm(n, n, d, &pd, true, &dch, false, &mut dvh, T::zero());
                if let Some(mk) = mask {
                    for (g, &k) in dpd.iter_mut().zip(mk) {
                        *g *= k;
                    }
                }
                // dS = P ∘ (dP − rowsum(dP ∘ P)), then the score scale.
                for r in 0..n {
                    let pr = &p[r * n..(r + 1) * n];
                    let gr = &mut dpd[r * n..(r + 1) * n];
                    let dot = pr.iter().zip(gr.iter()).fold(T::zero(), |acc, (&x, &g)| acc + x * g);
                    for (g, &x) in gr.iter_mut().zip(pr) {
                        *g = x * (*g - dot) * scale;
                    }
                }
                gemm(n, n, d, &dpd, false, &kh, false, &mut dqh, T::zero());
                gemm(n, n, d, &dpd, true, &qh, false, &mut dkh, T::zero());
                scatter_head(&dqh, h, a, d, &mut dq);
                scatter_head(&dkh, h, a, d, &mut dk);
                scatter_head(&dvh, h, a, d, &mut dv);
            }
            let mut dinput = dsum1;
            for (wr, br, dd) in [(&s.q_w, &s.q_b, &dq), (&s.k_w, &s.k_b, &dk), (&s.v_w, &s.v_b, &dv)] {
                let (dw, db) = pair_mut(grad, wr, br);
                let dx = linear_backward(&t.input, n, h, self.p(wr), h, dd, dw, db);
                for (a, &b) in dinput.iter_mut().zip(&dx) {
                    *a += b;
                }
            }
            dhidden = dinput;
        }

        apply_mask(&mut dhidden, &trace.emb_mask);
        let dx0 = {
            let (dg, db) = pair_mut(grad, &l.emb_ln_g, &l.emb_ln_b);
            layer_norm_backward(&dhidden, h, self.p(&l.emb_ln_g), &trace.emb_ln, dg, db)
        };
        for (i, &id) in trace.ids.iter().enumerate() {
            let row = &dx0[i * h..(i + 1) * h];
            let t0 = l.tok_emb.start + id as usize * h;
            let p0 = l.pos_emb.start + i * h;
            for j in 0..h {
                grad[t0 + j] += row[j];
                grad[p0 + j] += row[j];
            }
        }
    }

    /// Summed cross-entropy over `labels` (`(position, target)` pairs); when
    /// `grad` is given, the gradient of that sum is accumulated into it.
    pub fn loss_and_grad(
        &self,
        ids: &[u32],
        labels: &[(usize, u32)],
        rng: Option<&mut ChaCha8Rng>,
        grad: Option<&mut [T]>,
    ) -> Result<T> {
        if labels.is_empty() {
            return Ok(T::zero());
        }
        let v = self.config.vocab_size;
        let positions: Vec<usize> = labels.iter().map(|&(p, _)| p).collect();
        let (mut logits, trace) = self.forward_trace(ids, &positions, rng)?;
        let mut loss = T::zero();
        for (row, &(_, target)) in logits.chunks_exact_mut(v).zip(labels) {
            if target as usize >= v {
                return Err(Error::UnknownTokenId(target));
            }
            ops::log_softmax_in_place(row);
            loss -= row[target as usize];
            // Turn log-probabilities into dloss/dlogits = softmax − onehot.
            for x in row.iter_mut() {
                *x = x.exp();
            }
            row[target as usize] -= T::one();
        }
        if let Some(grad) = grad {
            self.backward(&trace, &logits, grad);
        }
        Ok(loss)
    }

    /// Logits at every position of every sequence: `(batch, seq, vocab)`
    /// flattened row-major. Sequences must share one length.
    pub fn logits_batch(&self, batch: &[Vec<u32>]) -> Result<(usize, usize, usize, Vec<T>)> {
        let n = batch.first().map_or(0, Vec::len);
        if batch.iter().any(|s| s.len() != n) {
            return Err(Error::Config("sequences in a batch must share one length".into()));
        }
        let all: Vec<usize> = (0..n).collect();
        let mut out = Vec::with_capacity(batch.len() * n * self.config.vocab_size);
        for ids in batch {
            out.extend(self.forward_trace(ids, &all, None)?.0);
        }
        Ok((batch.len(), n, self.config.vocab_size, out))
    }

    /// Log-probabilities over the vocabulary at one position, dropout off.
    pub fn log_probs_at(&self, ids: &[u32], position: usize) -> Result<Vec<T>> {
        let (mut logits, _) = self.forward_trace(ids, &[position], None)?;
        ops::log_softmax_in_place(&mut logits);
        Ok(logits)
    }

    pub fn to_f32(&self) -> Model<f32> {
        Model {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(|x| x.to_f32().unwrap_or(f32::NAN)).collect(),
        }
    }
}

fn gather_head<T: Real>(x: &[T], h: usize, head: usize, d: usize, out: &mut [T]) {
    for (i, row) in out.chunks_exact_mut(d).enumerate() {
        row.copy_from_slice(&x[i * h + head * d..i * h + head * d + d]);
    }
}

fn scatter_head<T: Real>(x: &[T], h: usize, head: usize, d: usize, out: &mut [T]) {
    for (i, row) in x.chunks_exact(d).enumerate() {
        out[i * h + head * d..i * h + head * d + d].copy_from_slice(row);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            num_layers: 1,
            hidden_size: 8,
            ffn_size: 16,
            num_heads: 2,
            dropout_rate: 0.0,
            attention_dropout_rate: 0.0,
            max_sequence_length: 16,
            ..ModelConfig::desk(20)
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = Model::<f32>::init(cfg(), 7).unwrap();
        let b = Model::<f32>::init(cfg(), 7).unwrap();
        assert!(a.params().iter().zip(b.params()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = Model::<f32>::init(cfg(), 8).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn logits_shape_and_finiteness() {
        let m = Model::<f32>::init(cfg(), 1).unwrap();
        let (b, n, v, logits) = m.logits_batch(&[alloc::vec![0, 7, 8, 1]]).unwrap();
        assert_eq!((b, n, v), (1, 4, 20));
        assert_eq!(logits.len(), 4 * 20);
        assert!(logits.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let m = Model::<f64>::init(cfg(), 3).unwrap();
        for pos in 0..5 {
            let lp = m.log_probs_at(&[0, 9, 4, 12, 1], pos).unwrap();
            let s: f64 = lp.iter().map(|x| x.exp()).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn invalid_configs() {
        let mut c = cfg();
        c.num_heads = 3;
        assert!(Model::<f32>::init(c, 0).is_err());
        let mut c = cfg();
        c.dropout_rate = 1.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.mask_rate = 0.0;
        assert!(c.validate().is_err());
        let m = Model::<f32>::init(cfg(), 0).unwrap();
        assert!(m.log_probs_at(&[0, 99], 0).is_err());
        assert!(m.log_probs_at(&[0; 17], 0).is_err());
    }

    #[test]
    fn layout_covers_buffer() {
        let m = Model::<f32>::init(cfg(), 0).unwrap();
        let specs = m.layout().specs();
        let mut expected = 0;
        for s in specs {
            assert_eq!(s.offset, expected);
            expected += s.len();
        }
        assert_eq!(expected, m.param_count());
        assert_eq!(specs[0].shape, alloc::vec![20, 8]);
    }
}
