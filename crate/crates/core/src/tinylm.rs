//! Deterministic decoder-only transformer used as target and draft models.
//!
//! Pre-norm LayerNorm blocks, multi-head causal attention, a GELU MLP and
//! learned absolute positions; no weight tying. Every linear layer runs
//! through [`crate::qgemm`], with weights stored either as `f32` or as an
//! MXFP4 direct cast.
//!
//! Each output position is computed independently of how many positions are
//! processed in the same call, so a batched forward is bit-identical to a
//! token-by-token forward. Speculative verification relies on this.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mxfp4::{dequantize, quantize_direct_cast, Layout, MxfpTensor, BLOCK_SIZE};
use crate::qgemm::{self, GemmPath};
use crate::tensor::Matrix;

/// Architecture hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub norm_epsilon: f32,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            vocab_size: crate::BYTE_VOCAB_SIZE,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 256,
            max_seq_len: 256,
            norm_epsilon: 1e-5,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("max_seq_len", self.max_seq_len),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(self.norm_epsilon.is_finite() && self.norm_epsilon > 0.0) {
            return Err(Error::Config("norm_epsilon must be positive".into()));
        }
        if self.vocab_size > u32::MAX as usize {
            return Err(Error::Config("vocab_size exceeds token id range".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Storage of a linear layer's `out x in` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightStore {
    F32(Matrix),
    Mxfp4(MxfpTensor),
}

impl WeightStore {
    pub fn bytes(&self) -> usize {
        match self {
            WeightStore::F32(m) => m.rows() * m.cols() * 4,
            WeightStore::Mxfp4(t) => t.storage_bytes(),
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            WeightStore::F32(m) => m.rows(),
            WeightStore::Mxfp4(t) => t.rows(),
        }
    }

    /// Reduction dimension as stored (MXFP4 may be zero-padded).
    pub fn cols(&self) -> usize {
        match self {
            WeightStore::F32(m) => m.cols(),
            WeightStore::Mxfp4(t) => t.cols(),
        }
    }

    pub fn is_mxfp4(&self) -> bool {
        matches!(self, WeightStore::Mxfp4(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: WeightStore,
    pub bias: Vec<f32>,
    pub in_features: usize,
}

impl Linear {
    fn seeded(rng: &mut ChaCha8Rng, out: usize, inp: usize, bound: f32) -> Self {
        let w = Matrix::from_fn(out, inp, |_, _| rng.random_range(-bound..=bound));
        Linear {
            weight: WeightStore::F32(w),
            bias: vec![0.0; out],
            in_features: inp,
        }
    }

    pub fn out_features(&self) -> usize {
        self.bias.len()
    }

    fn direct_cast(&self) -> Result<Linear> {
        let weight = match &self.weight {
            WeightStore::F32(m) => {
                let t = quantize_direct_cast(&m.pad_cols(BLOCK_SIZE))?;
                WeightStore::Mxfp4(t.to_layout(Layout::KBlocked))
            }
            WeightStore::Mxfp4(t) => WeightStore::Mxfp4(t.clone()),
        };
        Ok(Linear {
            weight,
            bias: self.bias.clone(),
            in_features: self.in_features,
        })
    }

    fn dequantized(&self) -> Linear {
        let weight = match &self.weight {
            WeightStore::F32(m) => WeightStore::F32(m.clone()),
            WeightStore::Mxfp4(t) => {
                let full = dequantize(t);
                WeightStore::F32(Matrix::from_fn(full.rows(), self.in_features, |r, c| {
                    full.get(r, c)
                }))
            }
        };
        Linear {
            weight,
            bias: self.bias.clone(),
            in_features: self.in_features,
        }
    }

    /// `x (T x in) -> T x out`.
    fn apply(&self, x: &Matrix, exec: &ExecOptions) -> Matrix {
        let start = Instant::now();
        let t = x.rows();
        let k = self.weight.cols();
        // activations as T contiguous columns of length K
        let cols: std::borrow::Cow<'_, [f32]> = if k == x.cols() {
            x.as_slice().into()
        } else {
            x.pad_cols(BLOCK_SIZE).into_vec().into()
        };
        let out_mt = match &self.weight {
            WeightStore::F32(w) => qgemm::reference_cols(w, &cols, t),
            WeightStore::Mxfp4(w) => match exec.mxfp4_path {
                GemmPath::Reference => qgemm::reference_cols(&dequantize(w), &cols, t),
                GemmPath::LatescaleF32 => qgemm::latescale_cols(w, &cols, t),
                GemmPath::Int8 => {
                    let panel = qgemm::quantize_cols(&cols, k, t);
                    qgemm::int8_panel(w, &panel)
                }
            },
        };
        let m = self.out_features();
        let mut y = Matrix::zeros(t, m);
        for r in 0..m {
            for c in 0..t {
                y.set(c, r, out_mt[r * t + c] + self.bias[r]);
            }
        }
        if let Some(bw) = exec.simulated_bandwidth {
            throttle(start, self.weight.bytes() as f64 / bw);
        }
        y
    }
}

/// Busy-waits until `seconds` have passed since `start`.
fn throttle(start: Instant, seconds: f64) {
    let target = Duration::from_secs_f64(seconds);
    while start.elapsed() < target {
        std::hint::spin_loop();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

impl LayerNorm {
    fn identity(d: usize) -> Self {
        LayerNorm {
            gamma: vec![1.0; d],
            beta: vec![0.0; d],
        }
    }

    fn apply(&self, x: &Matrix, eps: f32) -> Matrix {
        let d = x.cols();
        let mut out = Matrix::zeros(x.rows(), d);
        for r in 0..x.rows() {
            let row = x.row(r);
            let mean = row.iter().sum::<f32>() / d as f32;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d as f32;
            let inv = 1.0 / (var + eps).sqrt();
            for (c, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = (row[c] - mean) * inv * self.gamma[c] + self.beta[c];
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer {
    pub ln1: LayerNorm,
    pub attn_q: Linear,
    pub attn_k: Linear,
    pub attn_v: Linear,
    pub attn_o: Linear,
    pub ln2: LayerNorm,
    pub mlp_up: Linear,
    pub mlp_down: Linear,
}

impl DecoderLayer {
    fn linears(&self) -> [(&'static str, &Linear); 6] {
        [
            ("attn_q", &self.attn_q),
            ("attn_k", &self.attn_k),
            ("attn_v", &self.attn_v),
            ("attn_o", &self.attn_o),
            ("mlp_up", &self.mlp_up),
            ("mlp_down", &self.mlp_down),
        ]
    }

    fn map_linears(&self, f: impl Fn(&Linear) -> Result<Linear>) -> Result<DecoderLayer> {
        Ok(DecoderLayer {
            ln1: self.ln1.clone(),
            attn_q: f(&self.attn_q)?,
            attn_k: f(&self.attn_k)?,
            attn_v: f(&self.attn_v)?,
            attn_o: f(&self.attn_o)?,
            ln2: self.ln2.clone(),
            mlp_up: f(&self.mlp_up)?,
            mlp_down: f(&self.mlp_down)?,
        })
    }
}

/// Runtime knobs; not part of the serialized model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecOptions {
    /// Kernel used for MXFP4 linears. `f32` linears always use the reference.
    pub mxfp4_path: GemmPath,
    /// When set, every linear call takes at least `weight_bytes / bandwidth`
    /// seconds, emulating a host whose decode is bound by streaming weights.
    pub simulated_bandwidth: Option<f64>,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions {
            mxfp4_path: GemmPath::Int8,
            simulated_bandwidth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyLmModel {
    pub config: LmConfig,
    pub tok_emb: Matrix,
    pub pos_emb: Matrix,
    pub layers: Vec<DecoderLayer>,
    pub ln_f: LayerNorm,
    pub lm_head: Linear,
    pub exec: ExecOptions,
}

/// Borrowed view of one named parameter tensor.
#[derive(Debug, Clone, Copy)]
pub enum TensorRef<'a> {
    F32 {
        rows: usize,
        cols: usize,
        data: &'a [f32],
    },
    Mxfp4(&'a MxfpTensor),
}

impl TinyLmModel {
    /// Seeds every weight from `ChaCha8Rng::seed_from_u64(seed)`, uniform in
    /// `[-1/sqrt(d_model), 1/sqrt(d_model)]`, drawn in parameter order
    /// (token embedding, positions, per layer Q K V O up down, output head).
    /// Biases start at zero and norms at identity.
    pub fn init_seeded(config: LmConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let bound = 1.0 / (d as f32).sqrt();
        let mut uniform =
            |rows, cols| Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound));
        let tok_emb = uniform(config.vocab_size, d);
        let pos_emb = uniform(config.max_seq_len, d);
        let mut layers = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            layers.push(DecoderLayer {
                ln1: LayerNorm::identity(d),
                attn_q: Linear::seeded(&mut rng, d, d, bound),
                attn_k: Linear::seeded(&mut rng, d, d, bound),
                attn_v: Linear::seeded(&mut rng, d, d, bound),
                attn_o: Linear::seeded(&mut rng, d, d, bound),
                ln2: LayerNorm::identity(d),
                mlp_up: Linear::seeded(&mut rng, config.d_ff, d, bound),
                mlp_down: Linear::seeded(&mut rng, d, config.d_ff, bound),
            });
        }
        let lm_head = Linear::seeded(&mut rng, config.vocab_size, d, bound);
        Ok(TinyLmModel {
            config,
            tok_emb,
            pos_emb,
            layers,
            ln_f: LayerNorm::identity(d),
            lm_head,
            exec: ExecOptions::default(),
        })
    }

    pub fn with_exec(mut self, exec: ExecOptions) -> Self {
        self.exec = exec;
        self
    }

    /// Replaces every linear weight by its MXFP4 direct cast (K-blocked,
    /// reduction dimension zero-padded to a multiple of 32). Embeddings,
    /// norms and biases stay `f32`. Linears already in MXFP4 are kept.
    pub fn direct_cast_mxfp4(&self) -> Result<TinyLmModel> {
        self.map_linears(Linear::direct_cast)
    }

    /// Expands MXFP4 linears back to `f32`.
    pub fn dequantized(&self) -> TinyLmModel {
        self.map_linears(|l| Ok(l.dequantized()))
            .expect("dequantizing cannot fail")
    }

    fn map_linears(&self, f: impl Fn(&Linear) -> Result<Linear>) -> Result<TinyLmModel> {
        let layers = self
            .layers
            .iter()
            .map(|l| l.map_linears(&f))
            .collect::<Result<Vec<_>>>()?;
        Ok(TinyLmModel {
            config: self.config,
            tok_emb: self.tok_emb.clone(),
            pos_emb: self.pos_emb.clone(),
            layers,
            ln_f: self.ln_f.clone(),
            lm_head: f(&self.lm_head)?,
            exec: self.exec,
        })
    }

    pub fn linears(&self) -> impl Iterator<Item = (String, &Linear)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                l.linears()
                    .into_iter()
                    .map(move |(name, lin)| (format!("layers.{i}.{name}"), lin))
            })
            .chain(std::iter::once(("lm_head".to_string(), &self.lm_head)))
    }

    /// Bytes held by linear weight matrices (biases excluded).
    pub fn linear_weight_bytes(&self) -> usize {
        self.linears().map(|(_, l)| l.weight.bytes()).sum()
    }

    pub fn is_mxfp4(&self) -> bool {
        self.linears().any(|(_, l)| l.weight.is_mxfp4())
    }

    /// Every parameter tensor under its canonical name, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, TensorRef<'_>)> {
        fn dense(m: &Matrix) -> TensorRef<'_> {
            TensorRef::F32 {
                rows: m.rows(),
                cols: m.cols(),
                data: m.as_slice(),
            }
        }
        fn vector(v: &[f32]) -> TensorRef<'_> {
            TensorRef::F32 {
                rows: 1,
                cols: v.len(),
                data: v,
            }
        }
        fn weight(w: &WeightStore) -> TensorRef<'_> {
            match w {
                WeightStore::F32(m) => dense(m),
                WeightStore::Mxfp4(t) => TensorRef::Mxfp4(t),
            }
        }
        let mut out = vec![
            ("tok_emb".to_string(), dense(&self.tok_emb)),
            ("pos_emb".to_string(), dense(&self.pos_emb)),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            out.push((format!("layers.{i}.ln1.gamma"), vector(&layer.ln1.gamma)));
            out.push((format!("layers.{i}.ln1.beta"), vector(&layer.ln1.beta)));
            for (name, lin) in layer.linears() {
                out.push((format!("layers.{i}.{name}.weight"), weight(&lin.weight)));
                out.push((format!("layers.{i}.{name}.bias"), vector(&lin.bias)));
            }
            out.push((format!("layers.{i}.ln2.gamma"), vector(&layer.ln2.gamma)));
            out.push((format!("layers.{i}.ln2.beta"), vector(&layer.ln2.beta)));
        }
        out.push(("ln_f.gamma".into(), vector(&self.ln_f.gamma)));
        out.push(("ln_f.beta".into(), vector(&self.ln_f.beta)));
        out.push(("lm_head.weight".into(), weight(&self.lm_head.weight)));
        out.push(("lm_head.bias".into(), vector(&self.lm_head.bias)));
        out
    }

    /// SHA-256 over all named tensors (names, shapes and raw bytes).
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.named_tensors() {
            hash_tensor(&mut h, &name, t);
        }
        hex(&h.finalize())
    }

    /// SHA-256 over the first decoder layer's linear weights.
    pub fn first_layer_checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.named_tensors() {
            if name.starts_with("layers.0.") && name.ends_with(".weight") {
                hash_tensor(&mut h, &name, t);
            }
        }
        hex(&h.finalize())
    }

    pub fn new_cache(&self) -> KvCache {
        KvCache::new(&self.config)
    }

    /// Runs `new_tokens` through the model after the cached prefix and
    /// returns one logits row per new token. Row `i` conditions on the
    /// cached tokens plus `new_tokens[..=i]`; the cache is extended.
    pub fn forward(&self, cache: &mut KvCache, new_tokens: &[u32]) -> Result<Matrix> {
        let cfg = &self.config;
        if cache.keys.len() != cfg.n_layers || cache.d_model != cfg.d_model {
            return Err(Error::Shape("cache was built for a different model".into()));
        }
        let past = cache.len();
        let needed = past + new_tokens.len();
        if needed > cfg.max_seq_len {
            return Err(Error::ContextOverflow {
                needed,
                max: cfg.max_seq_len,
            });
        }
        if let Some(&token) = new_tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
            return Err(Error::TokenOutOfRange {
                token,
                vocab: cfg.vocab_size,
            });
        }
        let t = new_tokens.len();
        let d = cfg.d_model;
        if t == 0 {
            return Ok(Matrix::zeros(0, cfg.vocab_size));
        }

        let mut x = Matrix::from_fn(t, d, |i, c| {
            self.tok_emb.get(new_tokens[i] as usize, c) + self.pos_emb.get(past + i, c)
        });
        for (li, layer) in self.layers.iter().enumerate() {
            let h = layer.ln1.apply(&x, cfg.norm_epsilon);
            let q = layer.attn_q.apply(&h, &self.exec);
            let k = layer.attn_k.apply(&h, &self.exec);
            let v = layer.attn_v.apply(&h, &self.exec);
            cache.keys[li].extend_from_slice(k.as_slice());
            cache.values[li].extend_from_slice(v.as_slice());
            let att = attention(&q, &cache.keys[li], &cache.values[li], past, cfg);
            let o = layer.attn_o.apply(&att, &self.exec);
            add_assign(&mut x, &o);

            let h = layer.ln2.apply(&x, cfg.norm_epsilon);
            let mut u = layer.mlp_up.apply(&h, &self.exec);
            u.as_mut_slice().iter_mut().for_each(|v| *v = gelu(*v));
            let down = layer.mlp_down.apply(&u, &self.exec);
            add_assign(&mut x, &down);
        }
        cache.tokens.extend_from_slice(new_tokens);
        let h = self.ln_f.apply(&x, cfg.norm_epsilon);
        Ok(self.lm_head.apply(&h, &self.exec))
    }
}

fn add_assign(x: &mut Matrix, y: &Matrix) {
    for (a, b) in x.as_mut_slice().iter_mut().zip(y.as_slice()) {
        *a += b;
    }
}

fn gelu(x: f32) -> f32 {
    const SQRT_2_OVER_PI: f32 = 0.797_884_6;
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + 0.044_715 * x * x * x)).tanh())
}

/// Causal multi-head attention of `q` (rows are positions `past..past+T`)
/// against cached keys/values holding positions `0..past+T`.
fn attention(q: &Matrix, keys: &[f32], values: &[f32], past: usize, cfg: &LmConfig) -> Matrix {
    let d = cfg.d_model;
    let hd = cfg.head_dim();
    let scale = 1.0 / (hd as f32).sqrt();
    let mut out = Matrix::zeros(q.rows(), d);
    let mut probs = vec![0f32; past + q.rows()];
    for i in 0..q.rows() {
        let visible = past + i + 1;
        for head in 0..cfg.n_heads {
            let off = head * hd;
            let qi = &q.row(i)[off..off + hd];
            let scores = &mut probs[..visible];
            for (j, s) in scores.iter_mut().enumerate() {
                let kj = &keys[j * d + off..j * d + off + hd];
                *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f32>() * scale;
            }
            softmax_in_place(scores);
            let dst = &mut out.row_mut(i)[off..off + hd];
            for (j, &p) in scores.iter().enumerate() {
                let vj = &values[j * d + off..j * d + off + hd];
                for (o, v) in dst.iter_mut().zip(vj) {
                    *o += p * v;
                }
            }
        }
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0f32;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Argmax with ties broken to the lowest token id.
///
/// # Panics
/// On an empty row.
pub fn greedy_next(row: &[f32]) -> u32 {
    assert!(!row.is_empty(), "greedy_next on an empty logits row");
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best as u32
}

/// Softmax probability of `token` under `row`.
pub fn token_probability(row: &[f32], token: u32) -> f32 {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let sum: f64 = row.iter().map(|&v| ((v - max) as f64).exp()).sum();
    (((row[token as usize] - max) as f64).exp() / sum) as f32
}

/// Per-layer keys and values for every processed position, plus the tokens
/// that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct KvCache {
    keys: Vec<Vec<f32>>,
    values: Vec<Vec<f32>>,
    tokens: Vec<u32>,
    d_model: usize,
    max_seq_len: usize,
}

impl KvCache {
    pub fn new(config: &LmConfig) -> Self {
        KvCache {
            keys: vec![Vec::new(); config.n_layers],
            values: vec![Vec::new(); config.n_layers],
            tokens: Vec::new(),
            d_model: config.d_model,
            max_seq_len: config.max_seq_len,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.max_seq_len
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    /// Drops every position at or after `to_length`.
    pub fn rollback(&mut self, to_length: usize) -> Result<()> {
        if to_length > self.len() {
            return Err(Error::Rollback {
                len: self.len(),
                to: to_length,
            });
        }
        let keep = to_length * self.d_model;
        for layer in self.keys.iter_mut().chain(self.values.iter_mut()) {
            layer.truncate(keep);
        }
        self.tokens.truncate(to_length);
        Ok(())
    }
}

fn hash_tensor(h: &mut Sha256, name: &str, t: TensorRef<'_>) {
    h.update((name.len() as u64).to_le_bytes());
    h.update(name.as_bytes());
    match t {
        TensorRef::F32 { rows, cols, data } => {
            h.update([0u8]);
            h.update((rows as u64).to_le_bytes());
            h.update((cols as u64).to_le_bytes());
            for v in data {
                h.update(v.to_le_bytes());
            }
        }
        TensorRef::Mxfp4(t) => {
            h.update([1u8, t.layout().tag()]);
            h.update((t.rows() as u64).to_le_bytes());
            h.update((t.cols() as u64).to_le_bytes());
            for b in t.blocks() {
                h.update(b.codes);
                h.update([b.scale.biased_exponent()]);
            }
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
