//! Binary tensor and model files, prompt files and run reports.
//!
//! All integers are little-endian.
//!
//! Tensor record (32-byte header, then payload):
//!
//! ```text
//! magic "SQDT" | version u16 | dtype u8 | layout u8 | rows u64 | cols u64 | payload_len u64
//! ```
//!
//! * dtype 0 (`f32`): `rows * cols` little-endian `f32`, row-major; layout 0.
//! * dtype 1 (MXFP4): the 16 packed code bytes of every block in storage
//!   order (even element in the low nibble), then one E8M0 scale byte per
//!   block in the same order. `cols` is a multiple of 32.
//!
//! Model file:
//!
//! ```text
//! magic "SQDM" | version u16 | config_len u32 | config text (key=value lines)
//! section_count u32 | { name_len u16 | name | tensor record } * section_count
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mxfp4::{E8m0Scale, Layout, MxfpBlock, MxfpTensor, BLOCK_SIZE};
use crate::qgemm::BenchRecord;
use crate::specdec::{BenchmarkReport, RoundRecord};
use crate::tensor::Matrix;
use crate::tinylm::{DecoderLayer, LayerNorm, Linear, LmConfig, TensorRef, TinyLmModel, WeightStore};

pub const TENSOR_MAGIC: [u8; 4] = *b"SQDT";
pub const MODEL_MAGIC: [u8; 4] = *b"SQDM";
pub const FORMAT_VERSION: u16 = 1;
pub const TENSOR_HEADER_BYTES: u64 = 32;

const CODE_BYTES: u64 = BLOCK_SIZE as u64 / 2;

/// An owned tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    F32(Matrix),
    Mxfp4(MxfpTensor),
}

impl Tensor {
    pub fn as_ref(&self) -> TensorRef<'_> {
        match self {
            Tensor::F32(m) => TensorRef::F32 {
                rows: m.rows(),
                cols: m.cols(),
                data: m.as_slice(),
            },
            Tensor::Mxfp4(t) => TensorRef::Mxfp4(t),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Tensor::F32(m) => m.shape(),
            Tensor::Mxfp4(t) => (t.rows(), t.cols()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    Mxfp4,
}

impl DType {
    pub fn tag(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::Mxfp4 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(DType::F32),
            1 => Ok(DType::Mxfp4),
            _ => Err(Error::UnknownTag { what: "dtype", tag }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorHeader {
    pub dtype: DType,
    pub layout: Layout,
    pub rows: u64,
    pub cols: u64,
    pub payload_len: u64,
}

/// Payload bytes implied by a shape, `None` if the shape is impossible for
/// the dtype or overflows.
pub fn payload_len(dtype: DType, rows: u64, cols: u64) -> Option<u64> {
    let elems = rows.checked_mul(cols)?;
    match dtype {
        DType::F32 => elems.checked_mul(4),
        DType::Mxfp4 => {
            if !cols.is_multiple_of(BLOCK_SIZE as u64) {
                return None;
            }
            (elems / BLOCK_SIZE as u64).checked_mul(CODE_BYTES + 1)
        }
    }
}

fn header_of(t: TensorRef<'_>) -> TensorHeader {
    let (dtype, layout, rows, cols) = match t {
        TensorRef::F32 { rows, cols, .. } => (DType::F32, Layout::Plain, rows, cols),
        TensorRef::Mxfp4(m) => (DType::Mxfp4, m.layout(), m.rows(), m.cols()),
    };
    let (rows, cols) = (rows as u64, cols as u64);
    TensorHeader {
        dtype,
        layout,
        rows,
        cols,
        payload_len: payload_len(dtype, rows, cols).expect("in-memory tensor has a valid shape"),
    }
}

/// Writes one tensor record.
pub fn write_tensor<W: Write>(w: &mut W, t: TensorRef<'_>) -> Result<()> {
    let h = header_of(t);
    w.write_all(&TENSOR_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&[h.dtype.tag(), h.layout.tag()])?;
    w.write_all(&h.rows.to_le_bytes())?;
    w.write_all(&h.cols.to_le_bytes())?;
    w.write_all(&h.payload_len.to_le_bytes())?;
    match t {
        TensorRef::F32 { data, .. } => {
            let mut buf = Vec::with_capacity(data.len() * 4);
            for v in data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        TensorRef::Mxfp4(m) => {
            let mut buf = Vec::with_capacity(h.payload_len as usize);
            for b in m.blocks() {
                buf.extend_from_slice(&b.codes);
            }
            buf.extend(m.blocks().iter().map(|b| b.scale.biased_exponent()));
            w.write_all(&buf)?;
        }
    }
    Ok(())
}

pub fn save_tensor<W: Write>(w: &mut W, t: &Tensor) -> Result<()> {
    write_tensor(w, t.as_ref())
}

/// Reads up to `buf.len()` bytes, returning how many were available.
fn read_up_to<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(filled)
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    let got = read_up_to(r, buf)?;
    if got < buf.len() {
        return Err(Error::Truncated {
            expected: buf.len() as u64,
            got: got as u64,
        });
    }
    Ok(())
}

fn check_magic(found: [u8; 4], expected: [u8; 4]) -> Result<()> {
    if found != expected {
        return Err(Error::BadMagic { found, expected });
    }
    Ok(())
}

fn check_version(bytes: [u8; 2]) -> Result<()> {
    let found = u16::from_le_bytes(bytes);
    if found != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found,
            expected: FORMAT_VERSION,
        });
    }
    Ok(())
}

pub fn read_tensor_header<R: Read>(r: &mut R) -> Result<TensorHeader> {
    let mut h = [0u8; TENSOR_HEADER_BYTES as usize];
    read_exact_or_truncated(r, &mut h)?;
    check_magic(h[0..4].try_into().unwrap(), TENSOR_MAGIC)?;
    check_version(h[4..6].try_into().unwrap())?;
    let dtype = DType::from_tag(h[6])?;
    let layout = Layout::from_tag(h[7])?;
    if dtype == DType::F32 && layout != Layout::Plain {
        return Err(Error::UnknownTag {
            what: "f32 layout",
            tag: h[7],
        });
    }
    let rows = u64::from_le_bytes(h[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(h[16..24].try_into().unwrap());
    let payload = u64::from_le_bytes(h[24..32].try_into().unwrap());
    match payload_len(dtype, rows, cols) {
        Some(expected) if expected == payload => Ok(TensorHeader {
            dtype,
            layout,
            rows,
            cols,
            payload_len: payload,
        }),
        other => Err(Error::PayloadMismatch {
            rows,
            cols,
            payload,
            expected: other.unwrap_or(u64::MAX),
        }),
    }
}

/// Reads one tensor record. Every failure is reported before any tensor is
/// returned.
pub fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor> {
    let h = read_tensor_header(r)?;
    // grow with the data rather than trusting the header for the allocation
    let mut payload = Vec::new();
    r.by_ref().take(h.payload_len).read_to_end(&mut payload)?;
    if (payload.len() as u64) < h.payload_len {
        return Err(Error::Truncated {
            expected: h.payload_len,
            got: payload.len() as u64,
        });
    }
    let (rows, cols) = (h.rows as usize, h.cols as usize);
    match h.dtype {
        DType::F32 => {
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(Tensor::F32(Matrix::from_vec(rows, cols, data)?))
        }
        DType::Mxfp4 => {
            let n_blocks = rows * cols / BLOCK_SIZE;
            let (codes, scales) = payload.split_at(n_blocks * CODE_BYTES as usize);
            let blocks = codes
                .chunks_exact(CODE_BYTES as usize)
                .zip(scales)
                .map(|(c, &s)| {
                    let scale = E8m0Scale::from_biased(s).ok_or(Error::UnknownTag {
                        what: "E8M0 scale",
                        tag: s,
                    })?;
                    Ok(MxfpBlock {
                        codes: c.try_into().unwrap(),
                        scale,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Tensor::Mxfp4(MxfpTensor::from_blocks(rows, cols, h.layout, blocks)?))
        }
    }
}

pub fn load_tensor<R: Read>(r: &mut R) -> Result<Tensor> {
    read_tensor(r)
}

pub fn save_tensor_file(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    save_tensor(&mut w, t)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_tensor_file(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tensor(&mut BufReader::new(f))
}

/// `key=value` lines in a fixed order.
pub fn config_to_text(c: &LmConfig) -> String {
    format!(
        "vocab_size={}\nd_model={}\nn_layers={}\nn_heads={}\nd_ff={}\nmax_seq_len={}\nnorm_epsilon={}\n",
        c.vocab_size, c.d_model, c.n_layers, c.n_heads, c.d_ff, c.max_seq_len, c.norm_epsilon
    )
}

pub fn config_from_text(text: &str) -> Result<LmConfig> {
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("expected key=value, got `{line}`"),
        })?;
        if map.insert(k.trim().to_string(), (i + 1, v.trim().to_string())).is_some() {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("duplicate key `{}`", k.trim()),
            });
        }
    }
    fn take<T: std::str::FromStr>(map: &mut HashMap<String, (usize, String)>, key: &str) -> Result<T> {
        let (line, v) = map
            .remove(key)
            .ok_or_else(|| Error::ConfigMismatch(format!("missing config key `{key}`")))?;
        v.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad value `{v}` for `{key}`"),
        })
    }
    let config = LmConfig {
        vocab_size: take(&mut map, "vocab_size")?,
        d_model: take(&mut map, "d_model")?,
        n_layers: take(&mut map, "n_layers")?,
        n_heads: take(&mut map, "n_heads")?,
        d_ff: take(&mut map, "d_ff")?,
        max_seq_len: take(&mut map, "max_seq_len")?,
        norm_epsilon: take(&mut map, "norm_epsilon")?,
    };
    if let Some(key) = map.keys().next() {
        return Err(Error::ConfigMismatch(format!("unknown config key `{key}`")));
    }
    config.validate()?;
    Ok(config)
}

pub fn write_model<W: Write>(w: &mut W, model: &TinyLmModel) -> Result<()> {
    let config = config_to_text(&model.config);
    w.write_all(&MODEL_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(config.len() as u32).to_le_bytes())?;
    w.write_all(config.as_bytes())?;
    let tensors = model.named_tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        write_tensor(w, t)?;
    }
    Ok(())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<TinyLmModel> {
    let mut head = [0u8; 10];
    read_exact_or_truncated(r, &mut head)?;
    check_magic(head[0..4].try_into().unwrap(), MODEL_MAGIC)?;
    check_version(head[4..6].try_into().unwrap())?;
    let config_len = u32::from_le_bytes(head[6..10].try_into().unwrap()) as usize;
    let mut text = Vec::new();
    r.by_ref().take(config_len as u64).read_to_end(&mut text)?;
    if text.len() < config_len {
        return Err(Error::Truncated {
            expected: config_len as u64,
            got: text.len() as u64,
        });
    }
    let text = String::from_utf8(text).map_err(|_| Error::Parse {
        line: 0,
        msg: "config record is not UTF-8".into(),
    })?;
    let config = config_from_text(&text)?;

    let mut count = [0u8; 4];
    read_exact_or_truncated(r, &mut count)?;
    let count = u32::from_le_bytes(count);
    let mut sections = HashMap::new();
    for _ in 0..count {
        let mut len = [0u8; 2];
        read_exact_or_truncated(r, &mut len)?;
        let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
        read_exact_or_truncated(r, &mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Parse {
            line: 0,
            msg: "tensor name is not UTF-8".into(),
        })?;
        let tensor = read_tensor(r)?;
        if sections.insert(name.clone(), tensor).is_some() {
            return Err(Error::UnexpectedTensor(name));
        }
    }
    model_from_sections(config, sections)
}

struct Sections(HashMap<String, Tensor>);

impl Sections {
    fn take(&mut self, name: &str) -> Result<Tensor> {
        self.0
            .remove(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    fn dense(&mut self, name: &str, rows: usize, cols: usize) -> Result<Matrix> {
        match self.take(name)? {
            Tensor::F32(m) if m.shape() == (rows, cols) => Ok(m),
            t => Err(mismatch(name, (rows, cols), &t)),
        }
    }

    fn vector(&mut self, name: &str, len: usize) -> Result<Vec<f32>> {
        Ok(self.dense(name, 1, len)?.into_vec())
    }

    fn norm(&mut self, prefix: &str, d: usize) -> Result<LayerNorm> {
        Ok(LayerNorm {
            gamma: self.vector(&format!("{prefix}.gamma"), d)?,
            beta: self.vector(&format!("{prefix}.beta"), d)?,
        })
    }

    fn linear(&mut self, prefix: &str, out: usize, inp: usize) -> Result<Linear> {
        let name = format!("{prefix}.weight");
        let padded = inp.div_ceil(BLOCK_SIZE) * BLOCK_SIZE;
        let weight = match self.take(&name)? {
            Tensor::F32(m) if m.shape() == (out, inp) => WeightStore::F32(m),
            Tensor::Mxfp4(t) if (t.rows(), t.cols()) == (out, padded) => WeightStore::Mxfp4(t),
            t => return Err(mismatch(&name, (out, inp), &t)),
        };
        Ok(Linear {
            weight,
            bias: self.vector(&format!("{prefix}.bias"), out)?,
            in_features: inp,
        })
    }
}

fn mismatch(name: &str, expected: (usize, usize), t: &Tensor) -> Error {
    let (r, c) = t.shape();
    let kind = match t {
        Tensor::F32(_) => "f32",
        Tensor::Mxfp4(_) => "mxfp4",
    };
    Error::ConfigMismatch(format!(
        "tensor `{name}` is {kind} {r}x{c}, config expects {}x{}",
        expected.0, expected.1
    ))
}

/// Assembles a model from named sections, checking every name and shape
/// against `config`.
pub fn model_from_sections(config: LmConfig, sections: HashMap<String, Tensor>) -> Result<TinyLmModel> {
    config.validate()?;
    let mut s = Sections(sections);
    let (d, ff, v) = (config.d_model, config.d_ff, config.vocab_size);
    let tok_emb = s.dense("tok_emb", v, d)?;
    let pos_emb = s.dense("pos_emb", config.max_seq_len, d)?;
    let mut layers = Vec::with_capacity(config.n_layers);
    for i in 0..config.n_layers {
        let p = format!("layers.{i}");
        layers.push(DecoderLayer {
            ln1: s.norm(&format!("{p}.ln1"), d)?,
            attn_q: s.linear(&format!("{p}.attn_q"), d, d)?,
            attn_k: s.linear(&format!("{p}.attn_k"), d, d)?,
            attn_v: s.linear(&format!("{p}.attn_v"), d, d)?,
            attn_o: s.linear(&format!("{p}.attn_o"), d, d)?,
            ln2: s.norm(&format!("{p}.ln2"), d)?,
            mlp_up: s.linear(&format!("{p}.mlp_up"), ff, d)?,
            mlp_down: s.linear(&format!("{p}.mlp_down"), d, ff)?,
        });
    }
    let ln_f = s.norm("ln_f", d)?;
    let lm_head = s.linear("lm_head", v, d)?;
    if let Some(extra) = s.0.keys().min() {
        return Err(Error::UnexpectedTensor(extra.clone()));
    }
    Ok(TinyLmModel {
        config,
        tok_emb,
        pos_emb,
        layers,
        ln_f,
        lm_head,
        exec: Default::default(),
    })
}

pub fn save_model(path: impl AsRef<Path>, model: &TinyLmModel) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_model(&mut w, model)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TinyLmModel> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(&mut BufReader::new(f))
}

/// How prompt-file lines are tokenized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PromptMode {
    /// Whitespace-separated token ids.
    TokenIds,
    /// Raw text through the byte tokenizer.
    Bytes,
}

/// One prompt per non-blank line.
pub fn parse_prompts(text: &str, mode: PromptMode) -> Result<Vec<Vec<u32>>> {
    let mut prompts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let prompt = match mode {
            PromptMode::Bytes => crate::encode_bytes(line),
            PromptMode::TokenIds => line
                .split_whitespace()
                .map(|t| {
                    t.parse::<u32>().map_err(|_| Error::Parse {
                        line: i + 1,
                        msg: format!("`{t}` is not a token id"),
                    })
                })
                .collect::<Result<_>>()?,
        };
        prompts.push(prompt);
    }
    if prompts.is_empty() {
        return Err(Error::Empty("prompt file"));
    }
    Ok(prompts)
}

pub fn load_prompts(path: impl AsRef<Path>, mode: PromptMode) -> Result<Vec<Vec<u32>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_prompts(&text, mode)
}

#[derive(Serialize)]
struct RoundRow {
    prompt: usize,
    level: usize,
    proposed: usize,
    accepted: usize,
    draft_ms: f64,
    verify_ms: f64,
}

pub fn write_rounds_csv<W: Write>(w: W, rounds: &[(usize, RoundRecord)]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for (prompt, r) in rounds {
        csv.serialize(RoundRow {
            prompt: *prompt,
            level: r.level,
            proposed: r.proposed,
            accepted: r.accepted,
            draft_ms: r.draft_ms,
            verify_ms: r.verify_ms,
        })?;
    }
    if rounds.is_empty() {
        csv.write_record(["prompt", "level", "proposed", "accepted", "draft_ms", "verify_ms"])?;
    }
    csv.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRow {
    pub prompt: usize,
    pub level: usize,
    pub alpha: f64,
}

/// One row per prompt and draft level that proposed at least one token.
pub fn acceptance_rows(report: &BenchmarkReport) -> Vec<AcceptanceRow> {
    report
        .prompts
        .iter()
        .flat_map(|p| {
            p.alphas.iter().enumerate().filter_map(move |(level, a)| {
                a.map(|alpha| AcceptanceRow {
                    prompt: p.index,
                    level,
                    alpha,
                })
            })
        })
        .collect()
}

pub fn write_acceptance_csv<W: Write>(w: W, rows: &[AcceptanceRow]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for r in rows {
        csv.serialize(r)?;
    }
    if rows.is_empty() {
        csv.write_record(["prompt", "level", "alpha"])?;
    }
    csv.flush()?;
    Ok(())
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: String,
    pub depth: usize,
    pub prompts: usize,
    pub geomean_speedup: f64,
    /// Aggregate acceptance ratio per level; index 0 (the target) is null.
    pub alpha: Vec<Option<f64>>,
    pub proposed: Vec<u64>,
    pub accepted: Vec<u64>,
    pub generated_tokens: usize,
    pub greedy_seconds: f64,
    pub speculative_seconds: f64,
    /// Present when the run compared against greedy decoding.
    pub lossless: Option<bool>,
}

impl RunSummary {
    pub fn from_report(report: &BenchmarkReport, check_lossless: bool) -> Self {
        let mode = match report.depth {
            0 => "greedy",
            1 => "speculative",
            _ => "multi_level",
        };
        let levels = report.depth + 1;
        let level = |i: usize| report.stats.levels.get(i).cloned().unwrap_or_default();
        RunSummary {
            mode: mode.into(),
            depth: report.depth,
            prompts: report.prompts.len(),
            geomean_speedup: report.geomean_speedup,
            alpha: (0..levels).map(|i| level(i).alpha()).collect(),
            proposed: (0..levels).map(|i| level(i).proposed).collect(),
            accepted: (0..levels).map(|i| level(i).accepted).collect(),
            generated_tokens: report.prompts.iter().map(|p| p.generated).sum(),
            greedy_seconds: report.prompts.iter().map(|p| p.greedy_seconds).sum(),
            speculative_seconds: report.prompts.iter().map(|p| p.speculative_seconds).sum(),
            lossless: check_lossless.then(|| report.all_lossless()),
        }
    }
}

/// Writes `rounds.csv`, `acceptance.csv` and `summary.json` into `dir`.
pub fn write_run_outputs(dir: impl AsRef<Path>, report: &BenchmarkReport, check_lossless: bool) -> Result<RunSummary> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |name: &str| {
        let p = dir.join(name);
        File::create(&p).map(BufWriter::new).map_err(|e| Error::io(&p, e))
    };
    write_rounds_csv(create("rounds.csv")?, &report.rounds)?;
    write_acceptance_csv(create("acceptance.csv")?, &acceptance_rows(report))?;
    let summary = RunSummary::from_report(report, check_lossless);
    let mut w = create("summary.json")?;
    serde_json::to_writer_pretty(&mut w, &summary)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(summary)
}

pub fn write_bench_csv<W: Write>(w: W, records: &[BenchRecord]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for r in records {
        csv.serialize(r)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_bench_csv<R: Read>(r: R) -> Result<Vec<BenchRecord>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Serializes any sequence of records as CSV with a header row.
pub fn write_csv<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for r in rows {
        csv.serialize(r)?;
    }
    csv.flush()?;
    Ok(())
}
